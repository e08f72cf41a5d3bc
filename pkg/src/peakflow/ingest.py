"""Concurrent frame capture with latency-gated discard and fixed-size batching.

A pool of fetcher threads polls each camera on its own interval, throws away
any download that misses the per-frame deadline, and feeds survivors through
a bounded queue into a batcher that emits fixed-size batches (or smaller ones
after a flush timeout) to a caller-supplied sink. Frames live only in the
queue and the current batch; nothing is retained once the sink returns.
"""

from __future__ import annotations

import heapq
import itertools
import json
import os
import queue
import random
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterator, Sequence
from urllib.parse import urlparse

import httpx

from .core import ConfigurationError, SourceId, utc_now

Clock = Callable[[], datetime]


@dataclass(frozen=True)
class CameraEndpoint:
    source: SourceId
    url: str
    expected_width: int = 352
    expected_height: int = 240
    poll_interval_ms: float = 2000.0

    def __post_init__(self) -> None:
        parsed = urlparse(self.url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ConfigurationError(f"camera {self.source!r}: malformed url {self.url!r}")
        if self.poll_interval_ms <= 0:
            raise ConfigurationError(f"camera {self.source!r}: poll_interval_ms must be > 0")


@dataclass(frozen=True)
class Frame:
    source: SourceId
    captured_at: datetime
    payload: bytes
    payload_format: str = "jpeg"
    download_ms: float = 0.0


@dataclass(frozen=True)
class FrameBatch:
    batch_id: int
    frames: tuple[Frame, ...]

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class Discarded:
    source: SourceId
    reason: str  # "timeout" | "error"
    detail: str = ""


@dataclass(frozen=True)
class CollectorConfig:
    workers: int = 16
    batch_size: int = 64
    download_timeout_ms: float = 100.0
    batch_max_wait_ms: float = 250.0
    queue_capacity: int = 256
    sink_retries: int = 3

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.download_timeout_ms <= 0 or self.batch_max_wait_ms <= 0:
            raise ConfigurationError("timeouts must be > 0")
        if self.queue_capacity < self.batch_size:
            raise ConfigurationError("queue_capacity must be >= batch_size")


@dataclass(frozen=True)
class SourceStats:
    fetched: int = 0
    discarded_timeout: int = 0
    discarded_error: int = 0
    discarded_queue_full: int = 0
    batched: int = 0


@dataclass(frozen=True)
class StatsSnapshot:
    fetched: int
    discarded_timeout: int
    discarded_error: int
    discarded_queue_full: int
    batched: int
    persisted: int
    dropped_batches: int
    per_source: dict[SourceId, SourceStats] = field(default_factory=dict)

    def pending(self) -> int:
        """Frames fetched but not yet discarded or batched (in flight)."""
        return self.fetched - (
            self.discarded_timeout
            + self.discarded_error
            + self.discarded_queue_full
            + self.batched
        )

    def line(self) -> str:
        return (
            f"fetched={self.fetched} discarded_timeout={self.discarded_timeout} "
            f"discarded_error={self.discarded_error} "
            f"discarded_queue_full={self.discarded_queue_full} "
            f"batched={self.batched} persisted={self.persisted} "
            f"dropped_batches={self.dropped_batches}"
        )


class CollectorStats:
    """Monotone counters, safe to update from any thread and snapshot live."""

    _FIELDS = ("fetched", "discarded_timeout", "discarded_error", "discarded_queue_full", "batched")

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._totals = {name: 0 for name in self._FIELDS}
        self._per_source: dict[SourceId, dict[str, int]] = {}
        self._persisted = 0
        self._dropped_batches = 0

    def record(self, name: str, source: SourceId, n: int = 1) -> None:
        with self._lock:
            self._totals[name] += n
            per = self._per_source.setdefault(source, {f: 0 for f in self._FIELDS})
            per[name] += n

    def record_persisted(self, n: int) -> None:
        with self._lock:
            self._persisted += n

    def record_dropped_batch(self) -> None:
        with self._lock:
            self._dropped_batches += 1

    def snapshot(self) -> StatsSnapshot:
        with self._lock:
            return StatsSnapshot(
                **self._totals,
                persisted=self._persisted,
                dropped_batches=self._dropped_batches,
                per_source={
                    source: SourceStats(**per) for source, per in self._per_source.items()
                },
            )


def fetch_frame(
    cam: CameraEndpoint,
    timeout_ms: float,
    *,
    client: httpx.Client,
    clock: Clock = utc_now,
) -> Frame | Discarded:
    """Fetch one frame, enforcing `timeout_ms` on the complete download.

    The body is streamed so a transfer that blows the budget is aborted
    mid-flight rather than collected late; a download that completes but
    lands over budget is discarded the same way.
    """
    budget_s = timeout_ms / 1000.0
    start = time.perf_counter()
    try:
        with client.stream("GET", cam.url, timeout=budget_s) as response:
            if response.status_code != 200:
                return Discarded(cam.source, "error", f"http {response.status_code}")
            payload = bytearray()
            for chunk in response.iter_bytes():
                payload += chunk
                if time.perf_counter() - start > budget_s:
                    return Discarded(cam.source, "timeout", "aborted mid-download")
            elapsed_ms = (time.perf_counter() - start) * 1000.0
    except httpx.TimeoutException:
        return Discarded(cam.source, "timeout", "transport timeout")
    except (httpx.HTTPError, OSError) as exc:
        return Discarded(cam.source, "error", str(exc))
    if elapsed_ms > timeout_ms:
        return Discarded(cam.source, "timeout", f"completed late ({elapsed_ms:.1f}ms)")
    if not payload:
        return Discarded(cam.source, "error", "empty payload")
    content_type = response.headers.get("content-type", "")
    fmt = "jpeg" if "jpeg" in content_type or not content_type else content_type
    return Frame(cam.source, clock(), bytes(payload), fmt, elapsed_ms)


class _PollSchedule:
    """Due-time heap shared by the fetch workers. A camera is held by exactly
    one worker while its fetch runs, then rescheduled relative to its slot so
    intervals do not drift; missed slots collapse instead of bursting."""

    def __init__(self, cameras: Sequence[CameraEndpoint], rng: random.Random):
        now = time.monotonic()
        self._cond = threading.Condition()
        self._heap: list[tuple[float, int, CameraEndpoint]] = []
        for i, cam in enumerate(cameras):
            due = now + rng.uniform(0.0, cam.poll_interval_ms / 1000.0)
            heapq.heappush(self._heap, (due, i, cam))

    def acquire_due(self, stop: threading.Event) -> tuple[float, int, CameraEndpoint] | None:
        with self._cond:
            while not stop.is_set():
                if self._heap:
                    due = self._heap[0][0]
                    wait = due - time.monotonic()
                    if wait <= 0:
                        return heapq.heappop(self._heap)
                else:
                    wait = 0.1
                self._cond.wait(timeout=min(wait, 0.1))
            return None

    def release(self, entry: tuple[float, int, CameraEndpoint]) -> None:
        due, i, cam = entry
        interval = cam.poll_interval_ms / 1000.0
        next_due = max(due + interval, time.monotonic())
        with self._cond:
            heapq.heappush(self._heap, (next_due, i, cam))
            self._cond.notify()

    def wake_all(self) -> None:
        with self._cond:
            self._cond.notify_all()


def form_batches(
    frames: "queue.Queue[Frame]",
    batch_size: int,
    max_wait_ms: float,
    stop: threading.Event,
) -> Iterator[FrameBatch]:
    """Group queued frames into batches of exactly batch_size, flushing a
    partial batch once the oldest buffered frame has waited max_wait_ms.
    Never yields an empty batch; arrival order is preserved. When `stop` is
    set, whatever remains (buffered or still queued) drains into final
    batches, which are the only ones besides flushes allowed to be short.
    """
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    ids = itertools.count()
    max_wait_s = max_wait_ms / 1000.0
    buf: list[Frame] = []
    oldest = 0.0
    while not stop.is_set():
        if buf:
            # Wake at the flush deadline, but at least every 50ms for stop.
            timeout = min(max(0.0, oldest + max_wait_s - time.monotonic()), 0.05)
        else:
            timeout = 0.05
        try:
            frame = frames.get(timeout=timeout)
            if not buf:
                oldest = time.monotonic()
            buf.append(frame)
        except queue.Empty:
            pass
        if buf and (len(buf) >= batch_size or time.monotonic() - oldest >= max_wait_s):
            yield FrameBatch(next(ids), tuple(buf))
            buf = []
    while True:
        try:
            buf.append(frames.get_nowait())
        except queue.Empty:
            break
    for i in range(0, len(buf), batch_size):
        yield FrameBatch(next(ids), tuple(buf[i : i + batch_size]))


# Sink: consumes one batch, returns how many results it persisted (None = n/a).
BatchSink = Callable[[FrameBatch], int | None]


class FrameCollector:
    """Owns the fetcher pool, the bounded frame queue, and the batcher."""

    def __init__(
        self,
        cameras: Sequence[CameraEndpoint],
        config: CollectorConfig,
        sink: BatchSink,
        *,
        clock: Clock = utc_now,
        rng: random.Random | None = None,
    ):
        if not cameras:
            raise ConfigurationError("at least one camera is required")
        workers = config.workers
        env_workers = os.environ.get("COLLECTOR_WORKERS")
        if env_workers:
            try:
                workers = int(env_workers)
            except ValueError as exc:
                raise ConfigurationError(f"COLLECTOR_WORKERS={env_workers!r} is not an integer") from exc
            if workers < 1:
                raise ConfigurationError("COLLECTOR_WORKERS must be >= 1")
        self._cameras = list(cameras)
        self._config = config
        self._workers = workers
        self._sink = sink
        self._clock = clock
        self._stats = CollectorStats()
        self._queue: queue.Queue[Frame] = queue.Queue(maxsize=config.queue_capacity)
        self._stop = threading.Event()
        # Set only after the fetchers have quiesced, so the final drain
        # cannot race an in-flight fetch still putting frames.
        self._drain = threading.Event()
        self._schedule = _PollSchedule(self._cameras, rng or random.Random())
        self._threads: list[threading.Thread] = []

    @property
    def stats(self) -> CollectorStats:
        return self._stats

    def request_stop(self) -> None:
        self._stop.set()
        self._schedule.wake_all()

    def run(self, duration_s: float | None = None) -> StatsSnapshot:
        """Run until request_stop() (or for duration_s), then drain and
        return the final counters."""
        client = httpx.Client(limits=httpx.Limits(max_connections=self._workers * 2))
        try:
            for k in range(self._workers):
                t = threading.Thread(target=self._fetch_loop, args=(client,), name=f"fetcher-{k}", daemon=True)
                t.start()
                self._threads.append(t)
            batcher = threading.Thread(target=self._batch_loop, name="batcher", daemon=True)
            batcher.start()
            if duration_s is not None:
                self._stop.wait(timeout=duration_s)
                self.request_stop()
            else:
                self._stop.wait()
            quiesce = 2 * (self._config.download_timeout_ms + self._config.batch_max_wait_ms) / 1000.0 + 1.0
            for t in self._threads:
                t.join(timeout=quiesce)
            self._drain.set()
            batcher.join(timeout=quiesce)
        finally:
            client.close()
        return self._stats.snapshot()

    def _fetch_loop(self, client: httpx.Client) -> None:
        while True:
            entry = self._schedule.acquire_due(self._stop)
            if entry is None:
                return
            cam = entry[2]
            try:
                outcome = fetch_frame(
                    cam, self._config.download_timeout_ms, client=client, clock=self._clock
                )
                self._stats.record("fetched", cam.source)
                if isinstance(outcome, Frame):
                    try:
                        self._queue.put_nowait(outcome)
                    except queue.Full:
                        # Backpressure: drop the newest frame, memory stays bounded.
                        self._stats.record("discarded_queue_full", cam.source)
                else:
                    self._stats.record(f"discarded_{outcome.reason}", cam.source)
            finally:
                self._schedule.release(entry)

    def _batch_loop(self) -> None:
        cfg = self._config
        for batch in form_batches(self._queue, cfg.batch_size, cfg.batch_max_wait_ms, self._drain):
            for frame in batch.frames:
                self._stats.record("batched", frame.source)
            self._deliver(batch)

    def _deliver(self, batch: FrameBatch) -> None:
        for attempt in range(self._config.sink_retries + 1):
            try:
                persisted = self._sink(batch)
                if persisted:
                    self._stats.record_persisted(persisted)
                return
            except Exception:
                if attempt == self._config.sink_retries:
                    self._stats.record_dropped_batch()
                    return
                time.sleep(0.05 * (attempt + 1))


def run_collector(
    cameras: Sequence[CameraEndpoint],
    config: CollectorConfig,
    sink: BatchSink,
    *,
    stop_event: threading.Event | None = None,
    duration_s: float | None = None,
    clock: Clock = utc_now,
    rng: random.Random | None = None,
    collector_out: list[FrameCollector] | None = None,
) -> StatsSnapshot:
    """Convenience wrapper: build a FrameCollector, wire an external stop
    event if given, run to quiescence, and return final stats."""
    collector = FrameCollector(cameras, config, sink, clock=clock, rng=rng)
    if collector_out is not None:
        collector_out.append(collector)
    if stop_event is not None:
        def _watch() -> None:
            stop_event.wait()
            collector.request_stop()
        threading.Thread(target=_watch, daemon=True).start()
    return collector.run(duration_s=duration_s)


def load_camera_file(path: str | Path) -> list[CameraEndpoint]:
    """Camera list: JSON array of {id, url, width, height, poll_interval_ms}."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"camera file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"camera file is not valid JSON: {exc}") from exc
    if not isinstance(raw, list) or not raw:
        raise ConfigurationError("camera file must be a non-empty JSON array")
    cameras = []
    for entry in raw:
        try:
            cameras.append(
                CameraEndpoint(
                    source=str(entry["id"]),
                    url=str(entry["url"]),
                    expected_width=int(entry.get("width", 352)),
                    expected_height=int(entry.get("height", 240)),
                    poll_interval_ms=float(entry.get("poll_interval_ms", 2000.0)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad camera entry {entry!r}: {exc}") from exc
    return cameras
