"""Simulated camera fleet for desk-scale end-to-end runs.

An HTTP server exposes GET /cam/{id} endpoints that return synthetic JPEG
frames after a configurable sampled delay. Every frame carries its own ground
truth: the per-class counts for the (possibly accelerated) current instant
are stamped into the image as the pixel header the pattern decoder reads, so
the full pipeline runs with no model and remains exactly checkable.

Scenarios are count schedules with a scripted change at a split instant.
Profiles are deliberately piecewise-flat with guard hours around each peak:
after trailing-mean smoothing the peak buckets stay exactly on the scripted
values, which makes end-to-end deltas exact rather than approximate.
"""

from __future__ import annotations

import io
import json
import math
import random
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timedelta
from functools import lru_cache
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Mapping, Sequence
from urllib.parse import urlparse
from zoneinfo import ZoneInfo

import numpy as np
from PIL import Image

from . import codec
from .core import (
    DEFAULT_TIMEZONE,
    UTC,
    ConfigurationError,
    DayType,
    SourceId,
    VEHICLE_CLASSES,
    VehicleClass,
    day_type_of,
    hour_of,
    utc_now,
)

JPEG_QUALITY = 90
_BACKGROUND_GRAY = 96

CountScript = Callable[[datetime], Mapping[VehicleClass, int]]


# -- latency models ----------------------------------------------------------


@dataclass(frozen=True)
class ConstantLatency:
    ms: float = 5.0

    def __post_init__(self) -> None:
        if self.ms < 0:
            raise ConfigurationError("latency must be >= 0")

    def sample(self, rng: random.Random) -> float:
        return self.ms


@dataclass(frozen=True)
class UniformLatency:
    low_ms: float
    high_ms: float

    def __post_init__(self) -> None:
        if self.low_ms < 0 or self.high_ms < self.low_ms:
            raise ConfigurationError("uniform latency needs 0 <= low <= high")

    def sample(self, rng: random.Random) -> float:
        return rng.uniform(self.low_ms, self.high_ms)


@dataclass(frozen=True)
class BimodalLatency:
    fast_ms: float
    slow_ms: float
    slow_fraction: float

    def __post_init__(self) -> None:
        if self.fast_ms < 0 or self.slow_ms < 0:
            raise ConfigurationError("latency must be >= 0")
        if not (0.0 <= self.slow_fraction <= 1.0):
            raise ConfigurationError("slow_fraction must be in [0, 1]")

    def sample(self, rng: random.Random) -> float:
        return self.slow_ms if rng.random() < self.slow_fraction else self.fast_ms


LatencyModel = ConstantLatency | UniformLatency | BimodalLatency


# -- clocks and count scripts ------------------------------------------------


class VirtualClock:
    """Wall-anchored accelerated clock: one real second advances `rate`
    simulated seconds from `start`. rate=1 tracks real time."""

    def __init__(self, start: datetime, rate: float = 1.0):
        if start.tzinfo is None:
            raise ConfigurationError("virtual clock start must be timezone-aware")
        if rate <= 0:
            raise ConfigurationError("clock rate must be > 0")
        self._start = start.astimezone(UTC)
        self._rate = rate
        self._anchor = time.monotonic()

    @property
    def rate(self) -> float:
        return self._rate

    def now(self) -> datetime:
        elapsed = time.monotonic() - self._anchor
        return self._start + timedelta(seconds=elapsed * self._rate)


def _check_profile(name: str, values: Sequence[int]) -> tuple[int, ...]:
    profile = tuple(int(v) for v in values)
    if len(profile) != 24:
        raise ConfigurationError(f"{name} profile needs 24 hourly values, got {len(profile)}")
    if any(v < 0 or v > codec.MAX_COUNT for v in profile):
        raise ConfigurationError(f"{name} profile values must be in [0, {codec.MAX_COUNT}]")
    return profile


@dataclass(frozen=True)
class ScheduleScript:
    """Hour-of-day count schedule with separate weekday/weekend profiles and a
    switch from the *_before to the *_after profile at `split_at`."""

    weekday_before: tuple[int, ...]
    weekend_before: tuple[int, ...]
    weekday_after: tuple[int, ...]
    weekend_after: tuple[int, ...]
    split_at: datetime
    timezone: str = DEFAULT_TIMEZONE
    vehicle: VehicleClass = VehicleClass.CAR

    def __post_init__(self) -> None:
        for name in ("weekday_before", "weekend_before", "weekday_after", "weekend_after"):
            object.__setattr__(self, name, _check_profile(name, getattr(self, name)))
        if self.split_at.tzinfo is None:
            raise ConfigurationError("split_at must be timezone-aware")

    def __call__(self, now: datetime) -> dict[VehicleClass, int]:
        after = now >= self.split_at
        weekend = day_type_of(now, self.timezone) is DayType.WEEKEND
        if weekend:
            profile = self.weekend_after if after else self.weekend_before
        else:
            profile = self.weekday_after if after else self.weekday_before
        return {self.vehicle: profile[hour_of(now, self.timezone)]}


def sinusoidal_script(
    *,
    peak_hour: float = 17.0,
    amplitude: float = 10.0,
    base: float = 12.0,
    step: int = 0,
    split_at: datetime | None = None,
    timezone: str = DEFAULT_TIMEZONE,
    vehicle: VehicleClass = VehicleClass.CAR,
) -> CountScript:
    """Smooth daily profile peaking at `peak_hour`, with an optional constant
    `step` added from `split_at` on. Output clamped to the codec range."""
    if step and split_at is None:
        raise ConfigurationError("a step needs a split_at instant")
    zone = ZoneInfo(timezone)

    def script(now: datetime) -> dict[VehicleClass, int]:
        local = now.astimezone(zone)
        h = local.hour + local.minute / 60.0 + local.second / 3600.0
        value = base + amplitude * math.cos(2.0 * math.pi * (h - peak_hour) / 24.0)
        if split_at is not None and now >= split_at:
            value += step
        return {vehicle: max(0, min(codec.MAX_COUNT, round(value)))}

    return script


# -- camera fleet ------------------------------------------------------------


@dataclass(frozen=True)
class SimCameraSpec:
    source: SourceId
    count_script: CountScript
    width: int = 352
    height: int = 240
    latency_model: LatencyModel = ConstantLatency(5.0)

    def __post_init__(self) -> None:
        if self.width < codec.N_BLOCKS * codec.SMALL_BLOCK:
            raise ConfigurationError(
                f"camera {self.source!r}: width {self.width} too small for the count header"
            )
        if self.height < codec.SMALL_BLOCK:
            raise ConfigurationError(f"camera {self.source!r}: height {self.height} too small")


# Scenario timeline: two simulated weeks, split at the start of the second,
# both week boundaries on a Monday so each period holds 5 weekdays.
SCENARIO_START = datetime(2024, 12, 23, 0, 0, tzinfo=ZoneInfo(DEFAULT_TIMEZONE))
SCENARIO_SPLIT = datetime(2024, 12, 30, 0, 0, tzinfo=ZoneInfo(DEFAULT_TIMEZONE))
SCENARIO_RATE = 7200.0
SCENARIO_DAYS = 14

# Piecewise-flat weekday schedule. Each plateau is at least three hours wide
# and every window's peak plateau has a full guard hour on each side, so the
# smoothed hourly means inside a plateau equal the scripted value exactly.
_WEEKDAY_PROFILE = (2,) * 6 + (15,) * 3 + (6,) + (14,) * 6 + (20,) * 3 + (2,) * 5
_WEEKEND_QUIET = (2,) * 24
_WEEKEND_BUSY = (4,) * 24

SCENARIO_NAMES = ("step-change", "flat", "weekend-only-shift")


def _shift(profile: tuple[int, ...], hours: Sequence[int], delta: int) -> tuple[int, ...]:
    shifted = list(profile)
    for h in hours:
        shifted[h] += delta
    return _check_profile("shifted", shifted)


def scenario_script(
    name: str,
    *,
    delta: int = -3,
    split_at: datetime = SCENARIO_SPLIT,
    timezone: str = DEFAULT_TIMEZONE,
) -> ScheduleScript:
    """Count schedule for a named scenario.

    step-change: the weekday morning plateau moves by `delta` after the split
    (every other hour and weekends unchanged), so the morning weekday peak
    difference equals `delta` and every other window's difference is zero.
    flat: constant counts, all differences zero.
    weekend-only-shift: weekend level moves by `delta` after the split,
    weekdays unchanged.
    """
    if name == "step-change":
        return ScheduleScript(
            weekday_before=_WEEKDAY_PROFILE,
            weekend_before=_WEEKEND_QUIET,
            weekday_after=_shift(_WEEKDAY_PROFILE, (6, 7, 8), delta),
            weekend_after=_WEEKEND_QUIET,
            split_at=split_at,
            timezone=timezone,
        )
    if name == "flat":
        flat = (4,) * 24
        return ScheduleScript(flat, flat, flat, flat, split_at=split_at, timezone=timezone)
    if name == "weekend-only-shift":
        return ScheduleScript(
            weekday_before=_WEEKDAY_PROFILE,
            weekend_before=_WEEKEND_BUSY,
            weekday_after=_WEEKDAY_PROFILE,
            weekend_after=_shift(_WEEKEND_BUSY, range(24), delta),
            split_at=split_at,
            timezone=timezone,
        )
    raise ConfigurationError(f"unknown scenario {name!r} (choose from {', '.join(SCENARIO_NAMES)})")


def scripted_fleet(
    profile: str,
    n_cameras: int,
    *,
    delta: int = -3,
    split_at: datetime = SCENARIO_SPLIT,
    timezone: str = DEFAULT_TIMEZONE,
    width: int = 352,
    height: int = 240,
    latency_model: LatencyModel = ConstantLatency(5.0),
) -> list[SimCameraSpec]:
    """n cameras all running the named scenario's count schedule."""
    if n_cameras < 1:
        raise ConfigurationError("n_cameras must be >= 1")
    script = scenario_script(profile, delta=delta, split_at=split_at, timezone=timezone)
    return [
        SimCameraSpec(
            source=f"cam-{i:03d}",
            count_script=script,
            width=width,
            height=height,
            latency_model=latency_model,
        )
        for i in range(n_cameras)
    ]


# -- frame rendering ---------------------------------------------------------


@lru_cache(maxsize=4096)
def _render_jpeg(width: int, height: int, counts_key: tuple[int, ...]) -> bytes:
    image = np.full((height, width, 3), _BACKGROUND_GRAY, dtype=np.uint8)
    codec.encode_counts(image, dict(zip(VEHICLE_CLASSES, counts_key)))
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="JPEG", quality=JPEG_QUALITY)
    return buf.getvalue()


def render_frame(width: int, height: int, counts: Mapping[VehicleClass, int]) -> bytes:
    """JPEG frame with `counts` stamped into the pixel header. Cached per
    distinct (size, counts), so a steady fleet costs almost no CPU."""
    key = tuple(int(counts.get(cls, 0)) for cls in VEHICLE_CLASSES)
    return _render_jpeg(width, height, key)


# -- HTTP server -------------------------------------------------------------


@dataclass(frozen=True)
class RequestLogEntry:
    source: SourceId
    started_at: datetime
    latency_ms: float


class _FleetServer(ThreadingHTTPServer):
    daemon_threads = True

    def handle_error(self, request, client_address):
        # Clients abort over-budget downloads by design; a reset mid-write
        # is expected traffic, not something to dump a traceback for.
        pass

    def __init__(
        self,
        address: tuple[str, int],
        specs: Mapping[SourceId, SimCameraSpec],
        clock: Callable[[], datetime],
        rng: random.Random,
    ):
        super().__init__(address, _FleetHandler)
        self.specs = specs
        self.clock = clock
        self.rng = rng
        self.rng_lock = threading.Lock()
        self.log_lock = threading.Lock()
        self.request_log: list[RequestLogEntry] = []


class _FleetHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: _FleetServer

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        path = urlparse(self.path).path
        if path == "/healthz":
            self._send(200, b"ok", "text/plain")
            return
        if not path.startswith("/cam/"):
            self.send_error(404)
            return
        spec = self.server.specs.get(path[len("/cam/") :])
        if spec is None:
            self.send_error(404)
            return
        now = self.server.clock()
        with self.server.rng_lock:
            latency_ms = spec.latency_model.sample(self.server.rng)
        try:
            payload = render_frame(spec.width, spec.height, spec.count_script(now))
        except (ValueError, ConfigurationError) as exc:
            self.send_error(500, str(exc))
            return
        with self.server.log_lock:
            self.server.request_log.append(RequestLogEntry(spec.source, now, latency_ms))
        if latency_ms > 0:
            time.sleep(latency_ms / 1000.0)
        self._send(200, payload, "image/jpeg")

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, format: str, *args) -> None:
        pass


class CameraServer:
    """Handle for a running fleet: base URL, request log, idempotent stop."""

    def __init__(self, server: _FleetServer):
        self._server = server
        self._thread = threading.Thread(target=server.serve_forever, name="camsim", daemon=True)
        self._stopped = False
        self._thread.start()

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def url_for(self, source: SourceId) -> str:
        return f"{self.base_url}/cam/{source}"

    def request_log(self) -> list[RequestLogEntry]:
        with self._server.log_lock:
            return list(self._server.request_log)

    def clear_log(self) -> None:
        with self._server.log_lock:
            self._server.request_log.clear()

    def camera_file_entries(self, poll_interval_ms: float) -> list[dict]:
        """Camera-list entries (collector JSON format) for this fleet."""
        return [
            {
                "id": spec.source,
                "url": self.url_for(spec.source),
                "width": spec.width,
                "height": spec.height,
                "poll_interval_ms": poll_interval_ms,
            }
            for spec in self._server.specs.values()
        ]

    def write_camera_file(self, path: str | Path, poll_interval_ms: float = 2000.0) -> None:
        Path(path).write_text(json.dumps(self.camera_file_entries(poll_interval_ms), indent=2))

    def stop(self) -> None:
        if self._stopped:
            return
        self._stopped = True
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=10)

    def __enter__(self) -> "CameraServer":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(
    specs: Sequence[SimCameraSpec],
    port: int = 0,
    *,
    clock: Callable[[], datetime] | None = None,
    seed: int | None = None,
) -> CameraServer:
    """Start the fleet on 127.0.0.1:port (0 picks a free port) and return a
    running handle. `clock` drives the count scripts; default is real UTC."""
    if not specs:
        raise ConfigurationError("at least one camera spec is required")
    by_source = {spec.source: spec for spec in specs}
    if len(by_source) != len(specs):
        raise ConfigurationError("camera sources must be unique")
    server = _FleetServer(
        ("127.0.0.1", port), by_source, clock or utc_now, random.Random(seed)
    )
    return CameraServer(server)


# -- scenario files ----------------------------------------------------------


def _parse_latency(raw: object) -> LatencyModel:
    if raw is None:
        return ConstantLatency(5.0)
    if not isinstance(raw, dict):
        raise ConfigurationError("latency must be an object with a 'model' key")
    model = raw.get("model")
    try:
        if model == "constant":
            return ConstantLatency(float(raw["ms"]))
        if model == "uniform":
            return UniformLatency(float(raw["low_ms"]), float(raw["high_ms"]))
        if model == "bimodal":
            return BimodalLatency(
                float(raw["fast_ms"]), float(raw["slow_ms"]), float(raw["slow_fraction"])
            )
    except KeyError as exc:
        raise ConfigurationError(f"latency model {model!r} is missing field {exc}") from exc
    raise ConfigurationError(f"unknown latency model {model!r}")


def _parse_instant(raw: object, field_name: str, timezone: str) -> datetime:
    if not isinstance(raw, str):
        raise ConfigurationError(f"{field_name} must be an ISO-8601 string")
    try:
        value = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ConfigurationError(f"bad {field_name}: {exc}") from exc
    if value.tzinfo is None:
        value = value.replace(tzinfo=ZoneInfo(timezone))
    return value


@dataclass(frozen=True)
class Scenario:
    """A loaded scenario file: the fleet plus its simulated timeline."""

    name: str
    specs: tuple[SimCameraSpec, ...]
    start: datetime
    rate: float
    split_at: datetime
    timezone: str

    def clock(self) -> VirtualClock:
        return VirtualClock(self.start, self.rate)


def scenario_from_config(config: Mapping) -> Scenario:
    if not isinstance(config, Mapping):
        raise ConfigurationError("scenario config must be a JSON object")
    name = config.get("scenario")
    if not isinstance(name, str):
        raise ConfigurationError("scenario config needs a 'scenario' name")
    timezone = str(config.get("timezone", DEFAULT_TIMEZONE))
    start = _parse_instant(config.get("start", SCENARIO_START.isoformat()), "start", timezone)
    split_at = _parse_instant(config.get("split", SCENARIO_SPLIT.isoformat()), "split", timezone)
    try:
        n_cameras = int(config.get("cameras", 10))
        rate = float(config.get("rate", SCENARIO_RATE))
        raw_delta = float(config.get("delta", -3))
        width = int(config.get("width", 352))
        height = int(config.get("height", 240))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad scenario config value: {exc}") from exc
    if raw_delta != int(raw_delta):
        raise ConfigurationError("delta must be a whole number of vehicles")
    if rate <= 0:
        raise ConfigurationError("rate must be > 0")
    specs = scripted_fleet(
        name,
        n_cameras,
        delta=int(raw_delta),
        split_at=split_at,
        timezone=timezone,
        width=width,
        height=height,
        latency_model=_parse_latency(config.get("latency")),
    )
    return Scenario(name, tuple(specs), start, rate, split_at, timezone)


def load_scenario(path: str | Path) -> Scenario:
    """Scenario from a JSON file; see scenario_from_config for the keys."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"scenario file is not valid JSON: {exc}") from exc
    return scenario_from_config(raw)


def main(argv: Sequence[str] | None = None) -> int:
    """Run a scenario fleet from the command line until interrupted."""
    import argparse

    parser = argparse.ArgumentParser(
        prog="python -m peakflow.camsim",
        description="Serve a simulated camera fleet described by a scenario JSON file.",
    )
    parser.add_argument("scenario", help="path to the scenario JSON file")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument(
        "--cameras-out", help="also write a collector camera file pointing at this fleet"
    )
    parser.add_argument(
        "--poll-interval-ms",
        type=float,
        default=250.0,
        help="poll interval recorded in the camera file",
    )
    args = parser.parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        server = serve(scenario.specs, args.port, clock=scenario.clock().now)
    except ConfigurationError as exc:
        print(f"error: {exc}")
        return 2
    try:
        if args.cameras_out:
            server.write_camera_file(args.cameras_out, args.poll_interval_ms)
            print(f"wrote camera file: {args.cameras_out}")
        print(
            f"serving {len(scenario.specs)} cameras at {server.base_url} "
            f"(scenario {scenario.name}, clock rate {scenario.rate:g}x, "
            f"split {scenario.split_at.isoformat()})"
        )
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
