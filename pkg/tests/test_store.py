"""Durable detection store: idempotent appends, atomicity, range queries."""

import io
import random
import subprocess
import sys
import threading
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from peakflow.core import VEHICLE_CLASSES, VehicleClass, to_epoch_ms
from peakflow.detect import DetectionResult
from peakflow.store import AppendOutcome, CSV_COLUMNS, DetectionStore, StorageError

UTC = timezone.utc
BASE = datetime(2025, 1, 10, 12, 0, tzinfo=UTC)

HELPERS = Path(__file__).parent / "helpers"


def _result(source="cam", offset_s=0, model_id="stub-pattern", **counts):
    mapped = {VehicleClass(name): v for name, v in counts.items()}
    full = {cls: mapped.get(cls, 0) for cls in VEHICLE_CLASSES}
    return DetectionResult(
        source=source,
        captured_at=BASE + timedelta(seconds=offset_s),
        counts=full,
        confidence_threshold=0.25,
        model_id=model_id,
    )


@pytest.fixture
def store(tmp_path):
    with DetectionStore(tmp_path / "d.db") as s:
        yield s


def test_append_batch_of_64(store):
    outcome = store.append([_result(offset_s=i) for i in range(64)])
    assert outcome == AppendOutcome(written=64, skipped=0)
    assert store.count() == 64


def test_reappending_same_batch_writes_nothing(store):
    batch = [_result(offset_s=i) for i in range(64)]
    store.append(batch)
    outcome = store.append(batch)
    assert outcome == AppendOutcome(written=0, skipped=64)
    assert store.count() == 64


def test_identity_is_source_time_and_model(store):
    store.append([_result()])
    # Same instant, different source or model: distinct rows.
    assert store.append([_result(source="other")]).written == 1
    assert store.append([_result(model_id="other-model")]).written == 1
    assert store.count() == 3


def test_counts_round_trip_exactly(store):
    store.append([_result(car=3, bus=1, truck=255)])
    series = store.query_series()
    assert len(series) == 1
    obs = series[0].items[0]
    assert obs.counts[VehicleClass.CAR] == 3
    assert obs.counts[VehicleClass.BUS] == 1
    assert obs.counts[VehicleClass.TRUCK] == 255
    assert obs.counts[VehicleClass.BICYCLE] == 0
    assert obs.total == 259


def test_capture_time_preserved_to_the_millisecond(store):
    t = datetime(2025, 1, 10, 12, 0, 0, 123000, tzinfo=UTC)
    store.append(
        [
            DetectionResult(
                "cam", t, {cls: 0 for cls in VEHICLE_CLASSES}, 0.25, "stub-pattern"
            )
        ]
    )
    assert store.query_series()[0].items[0].captured_at == t


def test_query_returns_sorted_series_from_shuffled_inserts(store):
    rng = random.Random(3)
    offsets = list(range(100))
    rng.shuffle(offsets)
    store.append([_result(offset_s=off, car=off) for off in offsets])
    series = store.query_series()[0]
    stamps = [obs.captured_at for obs in series.items]
    assert stamps == sorted(stamps)
    assert [obs.counts[VehicleClass.CAR] for obs in series.items] == list(range(100))


def test_time_range_is_half_open(store):
    store.append([_result(offset_s=i) for i in range(10)])
    start = BASE + timedelta(seconds=2)
    end = BASE + timedelta(seconds=7)
    series = store.query_series(start=start, end=end)[0]
    got = [obs.captured_at for obs in series.items]
    assert got[0] == start  # inclusive lower bound
    assert got[-1] == end - timedelta(seconds=1)  # exclusive upper bound
    assert len(got) == 5


def test_unknown_source_produces_no_series(store):
    store.append([_result()])
    assert store.query_series(sources=["ghost"]) == []


def test_source_filter_and_ordering(store):
    store.append([_result(source=s, offset_s=i) for s in ("b", "a", "c") for i in range(3)])
    series = store.query_series(sources=["c", "a"])
    assert [s.source for s in series] == ["a", "c"]


def test_selector_narrows_counts_to_one_class(store):
    store.append([_result(car=3, bus=9)])
    series = store.query_series(selector=VehicleClass.BUS)
    obs = series[0].items[0]
    assert obs.counts == {VehicleClass.BUS: 9}
    assert obs.total == 9


def test_ten_thousand_rows_match_in_memory_reference(store):
    rng = random.Random(10_000)
    expected = {}
    batch = []
    for i in range(10_000):
        source = f"cam-{rng.randrange(5)}"
        offset = i  # unique per row so identity never collides
        car = rng.randrange(200)
        batch.append(_result(source=source, offset_s=offset, car=car))
        expected.setdefault(source, []).append((offset, car))
    outcome = store.append(batch)
    assert outcome.written == 10_000
    series = store.query_series()
    assert [s.source for s in series] == sorted(expected)
    for s in series:
        want = sorted(expected[s.source])
        got = [
            (int((obs.captured_at - BASE).total_seconds()), obs.counts[VehicleClass.CAR])
            for obs in s.items
        ]
        assert got == want


def test_export_import_round_trip(store, tmp_path):
    store.append([_result(offset_s=i, car=i % 7, bus=i % 3) for i in range(50)])
    buf = io.StringIO()
    assert store.export_csv(buf) == 50
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 51

    with DetectionStore(tmp_path / "copy.db") as copy:
        buf.seek(0)
        outcome = copy.import_csv(buf)
        assert outcome == AppendOutcome(written=50, skipped=0)
        # Imported data is observably identical.
        assert _dump(copy) == _dump(store)
        # Re-import is a no-op thanks to the identity key.
        buf.seek(0)
        assert copy.import_csv(buf) == AppendOutcome(written=0, skipped=50)


def _dump(store):
    out = []
    for series in store.query_series():
        for obs in series.items:
            out.append((series.source, obs.captured_at, tuple(sorted((k.value, v) for k, v in obs.counts.items()))))
    return out


def test_import_rejects_unexpected_header(store):
    bad = io.StringIO("row_id,source,time\n1,cam,0\n")
    with pytest.raises(StorageError):
        store.import_csv(bad)


def test_crash_mid_append_leaves_no_partial_rows(tmp_path):
    db = tmp_path / "crash.db"
    proc = subprocess.run(
        [sys.executable, str(HELPERS / "crash_child.py"), str(db), "40"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode != 0, proc.stdout + proc.stderr
    assert "append unexpectedly completed" not in proc.stdout
    with DetectionStore(db) as store:
        assert store.count() == 0
        # The same batch can then be delivered cleanly.
        outcome = store.append([_result(source="crash-cam", offset_s=i) for i in range(64)])
        assert outcome.written == 64


def test_concurrent_reader_sees_consistent_batches(store):
    stop = threading.Event()
    errors = []

    def reader():
        while not stop.is_set():
            n = store.count()
            # Appends are whole batches of 32, so counts are multiples of 32.
            if n % 32 != 0:
                errors.append(n)
                return

    t = threading.Thread(target=reader)
    t.start()
    try:
        for k in range(20):
            store.append([_result(offset_s=k * 32 + i) for i in range(32)])
    finally:
        stop.set()
        t.join()
    assert errors == []
    assert store.count() == 640


def test_append_empty_batch(store):
    assert store.append([]) == AppendOutcome(0, 0)
    assert store.count() == 0


def test_store_reopens_with_data_intact(tmp_path):
    path = tmp_path / "reopen.db"
    with DetectionStore(path) as store:
        store.append([_result(offset_s=i) for i in range(8)])
    with DetectionStore(path) as store:
        assert store.count() == 8
