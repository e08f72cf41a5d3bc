"""Random and scripted datasets shared by the analysis tests."""

from datetime import datetime, timedelta, timezone

from peakflow.core import Observation, ObservationSeries, VehicleClass

SPAN_START = datetime(2024, 12, 1, tzinfo=timezone.utc)
SPAN_SECONDS = 70 * 86400  # through early February, straddling the default split


def random_raw_dataset(rng, max_sources=5, max_points=1000, min_points=5):
    """{source: [(aware datetime ascending, int value), ...]} with irregular
    gaps spanning December through February."""
    n_sources = rng.randint(1, max_sources)
    total_budget = rng.randint(min_points * n_sources, max_points)
    raw = {}
    for k in range(n_sources):
        n = max(min_points, total_budget // n_sources + rng.randint(-3, 3))
        offsets = sorted(rng.randrange(SPAN_SECONDS) for _ in range(n))
        raw[f"src-{k}"] = [
            (SPAN_START + timedelta(seconds=off), rng.randint(0, 40)) for off in offsets
        ]
    return raw


def to_series(raw):
    """Package-side view of a raw dataset: totals carried as car counts."""
    out = []
    for source in sorted(raw):
        items = tuple(
            Observation.from_counts(source, t, {VehicleClass.CAR: v}) for t, v in raw[source]
        )
        out.append(ObservationSeries(source, items))
    return out


def shift_raw(raw, c):
    return {s: [(t, v + c) for t, v in pairs] for s, pairs in raw.items()}


def scale_raw(raw, alpha):
    return {s: [(t, v * alpha) for t, v in pairs] for s, pairs in raw.items()}


def hourly_schedule_raw(source, start, days, value_at, samples_per_hour=1):
    """[(datetime, value)] sampled on a fixed grid; value_at(t) -> int."""
    pairs = []
    step = timedelta(hours=1) / samples_per_hour
    t = start
    end = start + timedelta(days=days)
    while t < end:
        pairs.append((t, value_at(t)))
        t += step
    return {source: pairs}
