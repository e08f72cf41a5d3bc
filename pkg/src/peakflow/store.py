"""Durable append store for detection results.

Single-file SQLite database, one row per (source, captured_at, model_id).
Appends are atomic per call and idempotent on re-delivery; queries feed the
analysis stage with per-source observation series over half-open time ranges.
"""

from __future__ import annotations

import csv
import sqlite3
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from .core import (
    VEHICLE_CLASSES,
    Observation,
    ObservationSeries,
    SourceId,
    VehicleClass,
    from_epoch_ms,
    to_epoch_ms,
)
from .detect import DetectionResult

_CLASS_COLUMNS = ", ".join(cls.value for cls in VEHICLE_CLASSES)

CSV_COLUMNS = (
    "row_id",
    "source",
    "captured_at_ms",
    *(cls.value for cls in VEHICLE_CLASSES),
    "total",
    "threshold",
    "model_id",
)

_SCHEMA = f"""
CREATE TABLE IF NOT EXISTS detections (
    row_id INTEGER PRIMARY KEY AUTOINCREMENT,
    source TEXT NOT NULL,
    captured_at_ms INTEGER NOT NULL,
    {", ".join(f"{cls.value} INTEGER NOT NULL" for cls in VEHICLE_CLASSES)},
    total INTEGER NOT NULL,
    threshold REAL NOT NULL,
    model_id TEXT NOT NULL
);
CREATE UNIQUE INDEX IF NOT EXISTS idx_detections_identity
    ON detections (source, captured_at_ms, model_id);
CREATE INDEX IF NOT EXISTS idx_detections_time
    ON detections (captured_at_ms);
"""


class StorageError(Exception):
    """I/O or integrity failure; the failed append left no partial write."""


@dataclass(frozen=True)
class AppendOutcome:
    written: int
    skipped: int


class DetectionStore:
    """Single-writer store; append calls are serialized internally and
    readers use short-lived connections so they never block the writer."""

    def __init__(self, path: str | Path):
        self._path = str(path)
        self._write_lock = threading.Lock()
        self._conn = sqlite3.connect(self._path, check_same_thread=False)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=NORMAL")
        with self._write_lock:
            self._conn.executescript(_SCHEMA)
            self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> "DetectionStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def append(self, results: Iterable[DetectionResult]) -> AppendOutcome:
        """Insert results atomically; duplicates of (source, captured_at,
        model_id) are skipped and counted rather than rejected."""
        written = 0
        skipped = 0
        with self._write_lock:
            try:
                cur = self._conn.cursor()
                cur.execute("BEGIN")
                for result in results:
                    cur.execute(
                        f"INSERT OR IGNORE INTO detections "
                        f"(source, captured_at_ms, {_CLASS_COLUMNS}, total, threshold, model_id) "
                        f"VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                        (
                            result.source,
                            to_epoch_ms(result.captured_at),
                            *(int(result.counts.get(cls, 0)) for cls in VEHICLE_CLASSES),
                            sum(int(result.counts.get(cls, 0)) for cls in VEHICLE_CLASSES),
                            result.confidence_threshold,
                            result.model_id,
                        ),
                    )
                    if cur.rowcount == 1:
                        written += 1
                    else:
                        skipped += 1
                self._conn.commit()
            except sqlite3.Error as exc:
                self._conn.rollback()
                raise StorageError(f"append failed: {exc}") from exc
        return AppendOutcome(written, skipped)

    def count(self) -> int:
        with self._read_conn() as conn:
            (n,) = conn.execute("SELECT COUNT(*) FROM detections").fetchone()
        return int(n)

    def query_series(
        self,
        sources: Iterable[SourceId] | None = None,
        start: datetime | None = None,
        end: datetime | None = None,
        selector: VehicleClass | None = None,
    ) -> list[ObservationSeries]:
        """Per-source series over [start, end), sorted by capture time.

        `selector` narrows the observation counts to one class; None keeps
        all five. Unknown sources simply produce no series.
        """
        clauses: list[str] = []
        params: list[object] = []
        if sources is not None:
            names = list(sources)
            clauses.append(f"source IN ({','.join('?' * len(names))})")
            params.extend(names)
        if start is not None:
            clauses.append("captured_at_ms >= ?")
            params.append(to_epoch_ms(start))
        if end is not None:
            clauses.append("captured_at_ms < ?")
            params.append(to_epoch_ms(end))
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        sql = (
            f"SELECT source, captured_at_ms, {_CLASS_COLUMNS} FROM detections "
            f"{where} ORDER BY source, captured_at_ms, row_id"
        )
        grouped: dict[SourceId, list[Observation]] = {}
        with self._read_conn() as conn:
            for row in conn.execute(sql, params):
                source = row[0]
                captured_at = from_epoch_ms(row[1])
                counts = {cls: int(row[2 + i]) for i, cls in enumerate(VEHICLE_CLASSES)}
                if selector is not None:
                    counts = {selector: counts[selector]}
                grouped.setdefault(source, []).append(
                    Observation.from_counts(source, captured_at, counts)
                )
        return [
            ObservationSeries(source, tuple(items))
            for source, items in sorted(grouped.items())
        ]

    def export_csv(self, out: TextIO) -> int:
        """Dump every row in schema column order; returns the row count."""
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        n = 0
        with self._read_conn() as conn:
            for row in conn.execute(
                f"SELECT {', '.join(CSV_COLUMNS)} FROM detections ORDER BY row_id"
            ):
                writer.writerow(row)
                n += 1
        return n

    def import_csv(self, src: TextIO) -> AppendOutcome:
        """Load rows exported by export_csv. row_id values are regenerated;
        duplicates of the identity key are skipped as in append."""
        reader = csv.reader(src)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise StorageError(f"unexpected CSV header: {header}")
        return self.append(_rows_to_results(reader))

    @contextmanager
    def _read_conn(self) -> Iterator[sqlite3.Connection]:
        conn = sqlite3.connect(self._path)
        try:
            yield conn
        finally:
            conn.close()


def _rows_to_results(rows: Iterator[list[str]]) -> Iterator[DetectionResult]:
    for row in rows:
        if not row:
            continue
        counts = {cls: int(row[3 + i]) for i, cls in enumerate(VEHICLE_CLASSES)}
        yield DetectionResult(
            source=row[1],
            captured_at=from_epoch_ms(int(row[2])),
            counts=counts,
            confidence_threshold=float(row[9]),
            model_id=row[10],
        )
