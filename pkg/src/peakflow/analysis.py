"""Peak hour differential analysis.

Pipeline: smooth each source's counts with a fixed-size rolling mean, average
the smoothed values into (source, local hour, day type, period) buckets, take
the per-window peak of those bucket means, and difference the after-period
peak against the before-period peak. Every stage is a pure function so the
whole thing can be checked against brute force and parallelized per source.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, TextIO

from .core import (
    DayType,
    Observation,
    ObservationSeries,
    Period,
    SourceId,
    SplitConfig,
    TimeWindow,
    VehicleClass,
    day_type_of,
    default_split,
    hour_of,
    period_of,
)

# Inclusive-hour defaults; Morning and Midday intentionally share hour 9.
DEFAULT_WINDOWS: tuple[TimeWindow, ...] = (
    TimeWindow(0, 23, "Day"),
    TimeWindow(6, 9, "Morning"),
    TimeWindow(9, 15, "Midday"),
    TimeWindow(15, 18, "Afternoon"),
)

DEFAULT_WINDOW_SIZE = 12

# None selects the all-classes total; a VehicleClass selects that class alone.
ClassSelector = VehicleClass | None

REPORT_CSV_HEADER = (
    "source,day_type,window,peak_before,hour_before,peak_after,hour_after,delta"
)
MEANS_CSV_HEADER = "source,day_type,period,hour,mean,samples"


def select_value(obs: Observation, selector: ClassSelector) -> int:
    return obs.total if selector is None else int(obs.counts.get(selector, 0))


@dataclass(frozen=True)
class SmoothedPoint:
    at: datetime
    value: float


@dataclass(frozen=True)
class SmoothedSeries:
    source: SourceId
    items: tuple[SmoothedPoint, ...]

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class BucketStat:
    mean: float
    sample_count: int


BucketKey = tuple[SourceId, int, DayType, Period]


@dataclass(frozen=True)
class PartitionedMeanTable:
    """Bucket means keyed by (source, hour, day type, period).

    A key is absent exactly when its bucket received no samples.
    """

    entries: Mapping[BucketKey, BucketStat]

    def get(self, source: SourceId, hour: int, day_type: DayType, period: Period) -> BucketStat | None:
        return self.entries.get((source, hour, day_type, period))

    def sources(self) -> list[SourceId]:
        return sorted({key[0] for key in self.entries})


@dataclass(frozen=True)
class PeakValue:
    value: float = 0.0
    at_hour: int = -1
    defined: bool = False

    @classmethod
    def undefined(cls) -> "PeakValue":
        return cls()


@dataclass(frozen=True)
class PhdRow:
    source: SourceId
    day_type: DayType
    window_label: str
    peak_before: PeakValue
    peak_after: PeakValue
    delta: float | None


@dataclass(frozen=True)
class PhdReport:
    rows: tuple[PhdRow, ...]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class AnalysisConfig:
    window_size: int = DEFAULT_WINDOW_SIZE
    split: SplitConfig = field(default_factory=default_split)
    windows: tuple[TimeWindow, ...] = DEFAULT_WINDOWS
    class_selector: ClassSelector = None

    def __post_init__(self) -> None:
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if not self.windows:
            raise ValueError("windows must be non-empty")


def rolling_mean(
    series: ObservationSeries, window_size: int, selector: ClassSelector = None
) -> SmoothedSeries:
    """Trailing moving average over the last `window_size` observations.

    The window is sample-indexed, not time-indexed: irregular gaps are
    averaged across. The first window_size - 1 positions are warm-up and
    produce no output, so every emitted value averages a full window.
    """
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    values = [select_value(obs, selector) for obs in series.items]
    points: list[SmoothedPoint] = []
    running = 0
    for j, value in enumerate(values):
        running += value
        if j >= window_size:
            running -= values[j - window_size]
        if j >= window_size - 1:
            points.append(SmoothedPoint(series.items[j].captured_at, running / window_size))
    return SmoothedSeries(series.source, tuple(points))


def partitioned_means(
    smoothed: Iterable[SmoothedSeries], split: SplitConfig
) -> PartitionedMeanTable:
    """Arithmetic mean of smoothed values per (source, hour, day type, period).

    Accumulation runs in timestamp order within each series, so results are
    deterministic however series are distributed across workers.
    """
    sums: dict[BucketKey, float] = {}
    counts: dict[BucketKey, int] = {}
    tz = split.timezone
    for series in smoothed:
        for point in series.items:
            key = (
                series.source,
                hour_of(point.at, tz),
                day_type_of(point.at, tz),
                period_of(point.at, split),
            )
            sums[key] = sums.get(key, 0.0) + point.value
            counts[key] = counts.get(key, 0) + 1
    entries = {key: BucketStat(sums[key] / counts[key], counts[key]) for key in sums}
    return PartitionedMeanTable(entries)


def peak(
    table: PartitionedMeanTable,
    source: SourceId,
    day_type: DayType,
    period: Period,
    window: TimeWindow,
) -> PeakValue:
    """Max bucket mean over the window's inclusive hour range.

    Ties go to the smallest hour; a window with no occupied bucket yields an
    undefined peak rather than a zero, since zero would read as no traffic.
    """
    best: PeakValue | None = None
    for hour in window.hours():
        stat = table.get(source, hour, day_type, period)
        if stat is not None and (best is None or stat.mean > best.value):
            best = PeakValue(stat.mean, hour, True)
    return best if best is not None else PeakValue.undefined()


def phd(
    table: PartitionedMeanTable,
    source: SourceId,
    day_type: DayType,
    window: TimeWindow,
) -> PhdRow:
    """Peak difference after - before; undefined when either peak is."""
    before = peak(table, source, day_type, Period.BEFORE, window)
    after = peak(table, source, day_type, Period.AFTER, window)
    delta = after.value - before.value if before.defined and after.defined else None
    return PhdRow(source, day_type, window.label, before, after, delta)


def process_traffic_data(
    observations: Iterable[ObservationSeries], config: AnalysisConfig
) -> PhdReport:
    """Full pipeline: smooth, bucket, peak, difference.

    Emits one row per (source, day type, window), undefined deltas included,
    sorted by (source, day_type, window_label).
    """
    smoothed = [
        rolling_mean(series, config.window_size, config.class_selector)
        for series in observations
    ]
    table = partitioned_means(smoothed, config.split)
    sources = sorted({series.source for series in smoothed})
    rows = [
        phd(table, source, day_type, window)
        for source in sources
        for day_type in (DayType.WEEKDAY, DayType.WEEKEND)
        for window in config.windows
    ]
    rows.sort(key=lambda row: (row.source, row.day_type.value, row.window_label))
    return PhdReport(tuple(rows))


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def _fmt_hour(peak_value: PeakValue) -> str:
    return str(peak_value.at_hour) if peak_value.defined else ""


def write_report_csv(report: PhdReport, out: TextIO) -> None:
    """Report rows as CSV; undefined peaks and deltas serialize as empty fields."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_CSV_HEADER.split(","))
    for row in report.rows:
        writer.writerow(
            [
                row.source,
                row.day_type.value,
                row.window_label,
                _fmt(row.peak_before.value if row.peak_before.defined else None),
                _fmt_hour(row.peak_before),
                _fmt(row.peak_after.value if row.peak_after.defined else None),
                _fmt_hour(row.peak_after),
                _fmt(row.delta),
            ]
        )


def report_csv_text(report: PhdReport) -> str:
    buf = io.StringIO()
    write_report_csv(report, buf)
    return buf.getvalue()


def write_means_csv(table: PartitionedMeanTable, out: TextIO) -> None:
    """Bucket means as CSV, one row per occupied bucket, stable order."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(MEANS_CSV_HEADER.split(","))
    keys = sorted(
        table.entries,
        key=lambda k: (k[0], k[2].value, k[3].value, k[1]),
    )
    for source, hour, day_type, period in keys:
        stat = table.entries[(source, hour, day_type, period)]
        writer.writerow(
            [source, day_type.value, period.value, hour, f"{stat.mean:.6f}", stat.sample_count]
        )
