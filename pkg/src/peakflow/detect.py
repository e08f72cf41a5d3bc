"""Pluggable detection boundary.

Detection is exchangeable behind a small backend interface: a deterministic
built-in stub that reads the simulator's pixel header (used by the whole test
suite), and a subprocess gateway speaking newline-delimited JSON for external
workers. Preprocessing for real models follows the letterbox contract:
aspect-preserving resize to a square target with symmetric neutral-gray pads.

Wire protocol (one UTF-8 JSON document per line over the worker's stdio):
  worker -> {"type":"hello","max_batch":M,"model_id":STR}          on startup
  gateway -> {"type":"detect","batch_id":N,"frames":[{"source":S,
              "captured_at":ISO8601,"format":"jpeg","data":BASE64}]}
  worker -> {"type":"result","batch_id":N,"results":[{"source":S,
             "captured_at":ISO8601,"counts":{...five classes...}}]}
         |  {"type":"error","batch_id":N,"message":STR}
"""

from __future__ import annotations

import base64
import io
import json
import queue
import subprocess
import threading
from dataclasses import dataclass
from datetime import datetime
from typing import Mapping, Protocol, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import codec
from .core import (
    UTC,
    SourceId,
    VEHICLE_CLASSES,
    VehicleClass,
    zero_counts,
)
from .ingest import Frame, FrameBatch

DEFAULT_CONFIDENCE_THRESHOLD = 0.25
DEFAULT_INPUT_SIZE = 352
PAD_GRAY = 114  # neutral letterbox fill

# The stub reports everything at this confidence; thresholds above it zero
# the counts, which also covers the degenerate threshold >= 1.0 contract.
STUB_CONFIDENCE = 0.99
STUB_MODEL_ID = "stub-pattern"


class BackendError(Exception):
    """Backend crashed, timed out, or desynced; the whole batch is retriable."""


@dataclass(frozen=True)
class BackendInfo:
    max_batch: int
    input_size: int
    model_id: str


@dataclass(frozen=True)
class BackendDetection:
    counts: dict[VehicleClass, int]
    corrupt: bool = False


@dataclass(frozen=True)
class DetectionResult:
    source: SourceId
    captured_at: datetime
    counts: Mapping[VehicleClass, int]
    confidence_threshold: float
    model_id: str
    corrupt: bool = False

    @property
    def total(self) -> int:
        return sum(self.counts.values())


class DetectorBackend(Protocol):
    @property
    def info(self) -> BackendInfo: ...

    def detect(self, frames: Sequence[Frame], threshold: float) -> list[BackendDetection]: ...


@dataclass(frozen=True)
class LetterboxMeta:
    scale: float
    pad_left: int
    pad_top: int
    source_width: int
    source_height: int

    def to_source(self, x: float, y: float) -> tuple[float, float]:
        """Map letterboxed coordinates back onto the original image."""
        return (x - self.pad_left) / self.scale, (y - self.pad_top) / self.scale

    def to_target(self, x: float, y: float) -> tuple[float, float]:
        return x * self.scale + self.pad_left, y * self.scale + self.pad_top


def letterbox(image: np.ndarray, target: int = DEFAULT_INPUT_SIZE) -> tuple[np.ndarray, LetterboxMeta]:
    """Aspect-preserving resize of the longest side to `target`, padded
    symmetrically with neutral gray to a square."""
    if image.ndim not in (2, 3) or image.shape[0] == 0 or image.shape[1] == 0:
        raise ValueError("image must be a non-empty HxW or HxWxC array")
    height, width = image.shape[:2]
    scale = target / max(height, width)
    new_w = max(1, round(width * scale))
    new_h = max(1, round(height * scale))
    if (new_w, new_h) != (width, height):
        resized = np.asarray(
            Image.fromarray(image).resize((new_w, new_h), Image.BILINEAR)
        )
    else:
        resized = image
    pad_left = (target - new_w) // 2
    pad_top = (target - new_h) // 2
    shape = (target, target) + image.shape[2:]
    out = np.full(shape, PAD_GRAY, dtype=image.dtype)
    out[pad_top : pad_top + new_h, pad_left : pad_left + new_w, ...] = resized
    return out, LetterboxMeta(scale, pad_left, pad_top, width, height)


def _decode_frame(frame: Frame) -> BackendDetection:
    try:
        image = np.asarray(Image.open(io.BytesIO(frame.payload)).convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError):
        return BackendDetection(zero_counts(), corrupt=True)
    counts = codec.decode_counts(image)
    return BackendDetection(counts if counts is not None else zero_counts())


def stub_detect(frame: Frame) -> dict[VehicleClass, int]:
    """Counts encoded in the frame's pixel header; all zeros for anything
    that is not a pattern frame."""
    return _decode_frame(frame).counts


class StubBackend:
    """Deterministic in-process backend over the pattern codec."""

    def __init__(self, max_batch: int = 64):
        self._info = BackendInfo(max_batch=max_batch, input_size=DEFAULT_INPUT_SIZE, model_id=STUB_MODEL_ID)

    @property
    def info(self) -> BackendInfo:
        return self._info

    def detect(self, frames: Sequence[Frame], threshold: float) -> list[BackendDetection]:
        out = []
        for frame in frames:
            detection = _decode_frame(frame)
            if threshold > STUB_CONFIDENCE and not detection.corrupt:
                detection = BackendDetection(zero_counts())
            out.append(detection)
        return out


def detect_batch(
    batch: FrameBatch,
    backend: DetectorBackend,
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
) -> list[DetectionResult]:
    """Run one batch through a backend: exactly one result per frame, in
    frame order. Backend failures raise BackendError (whole batch retriable);
    corrupt frames come back as flagged zero-count results."""
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must be in (0, 1]")
    if len(batch.frames) > backend.info.max_batch:
        raise ValueError(
            f"batch of {len(batch.frames)} exceeds backend max_batch {backend.info.max_batch}"
        )
    detections = backend.detect(batch.frames, threshold)
    if len(detections) != len(batch.frames):
        raise BackendError(
            f"backend returned {len(detections)} results for {len(batch.frames)} frames"
        )
    results = []
    for frame, detection in zip(batch.frames, detections):
        counts = dict(detection.counts)
        if threshold >= 1.0:
            # No detection carries confidence >= 1.0, whatever the backend.
            counts = zero_counts()
        results.append(
            DetectionResult(
                source=frame.source,
                captured_at=frame.captured_at,
                counts=counts,
                confidence_threshold=threshold,
                model_id=backend.info.model_id,
                corrupt=detection.corrupt,
            )
        )
    return results


def format_timestamp(t: datetime) -> str:
    """ISO-8601 UTC with millisecond precision and a Z suffix."""
    return t.astimezone(UTC).strftime("%Y-%m-%dT%H:%M:%S.") + f"{t.microsecond // 1000:03d}Z"


def parse_timestamp(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00")).astimezone(UTC)


def frame_to_wire(frame: Frame) -> dict:
    return {
        "source": frame.source,
        "captured_at": format_timestamp(frame.captured_at),
        "format": frame.payload_format,
        "data": base64.b64encode(frame.payload).decode("ascii"),
    }


class SubprocessBackend:
    """Gateway to an external worker process speaking the stdio protocol.

    One batch in flight at a time; a response timeout or a batch_id desync
    poisons the process, which is torn down and relaunched on the next call.
    """

    def __init__(
        self,
        command: Sequence[str],
        *,
        response_timeout_s: float = 30.0,
        hello_timeout_s: float = 15.0,
    ):
        self._command = list(command)
        self._response_timeout_s = response_timeout_s
        self._hello_timeout_s = hello_timeout_s
        self._lock = threading.Lock()
        self._proc: subprocess.Popen[str] | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._next_batch_id = 0
        self._info: BackendInfo | None = None
        self._ensure_started()

    @property
    def info(self) -> BackendInfo:
        with self._lock:
            self._ensure_started()
            assert self._info is not None
            return self._info

    def detect(self, frames: Sequence[Frame], threshold: float) -> list[BackendDetection]:
        with self._lock:
            self._ensure_started()
            assert self._info is not None
            if len(frames) > self._info.max_batch:
                raise ValueError(f"batch exceeds worker max_batch {self._info.max_batch}")
            batch_id = self._next_batch_id
            self._next_batch_id += 1
            request = {
                "type": "detect",
                "batch_id": batch_id,
                "frames": [frame_to_wire(f) for f in frames],
            }
            try:
                assert self._proc is not None and self._proc.stdin is not None
                self._proc.stdin.write(json.dumps(request) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._teardown()
                raise BackendError(f"worker pipe closed: {exc}") from exc
            message = self._read_message(self._response_timeout_s)
            if message.get("type") == "error":
                if message.get("batch_id") not in (batch_id, -1):
                    self._teardown()
                    raise BackendError("worker error for mismatched batch_id")
                raise BackendError(f"worker error: {message.get('message', '')}")
            if message.get("type") != "result" or message.get("batch_id") != batch_id:
                self._teardown()
                raise BackendError(f"protocol desync: expected result for batch {batch_id}, got {message}")
            results = message.get("results")
            if not isinstance(results, list) or len(results) != len(frames):
                self._teardown()
                raise BackendError("worker returned wrong result cardinality")
            return [self._parse_result(frame, item) for frame, item in zip(frames, results)]

    def close(self) -> None:
        with self._lock:
            self._teardown()

    def __enter__(self) -> "SubprocessBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @staticmethod
    def _parse_result(frame: Frame, item: object) -> BackendDetection:
        if not isinstance(item, dict):
            raise BackendError(f"malformed result entry: {item!r}")
        if item.get("source") != frame.source:
            raise BackendError("result order does not match request order")
        raw = item.get("counts")
        if not isinstance(raw, dict):
            raise BackendError("result entry missing counts")
        counts = zero_counts()
        for cls in VEHICLE_CLASSES:
            value = raw.get(cls.value, 0)
            if not isinstance(value, int) or value < 0:
                raise BackendError(f"bad count for {cls.value}: {value!r}")
            counts[cls] = value
        return BackendDetection(counts)

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._teardown()
        self._proc = subprocess.Popen(
            self._command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._lines = queue.Queue()
        threading.Thread(target=self._pump_stdout, args=(self._proc,), daemon=True).start()
        hello = self._read_message(self._hello_timeout_s)
        if hello.get("type") != "hello":
            self._teardown()
            raise BackendError(f"worker did not say hello: {hello}")
        max_batch = hello.get("max_batch")
        model_id = hello.get("model_id")
        if not isinstance(max_batch, int) or max_batch < 1 or not isinstance(model_id, str):
            self._teardown()
            raise BackendError(f"bad hello: {hello}")
        self._info = BackendInfo(
            max_batch=max_batch,
            input_size=int(hello.get("input_size", DEFAULT_INPUT_SIZE)),
            model_id=model_id,
        )

    def _pump_stdout(self, proc: subprocess.Popen[str]) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _read_message(self, timeout_s: float) -> dict:
        try:
            line = self._lines.get(timeout=timeout_s)
        except queue.Empty:
            self._teardown()
            raise BackendError("worker response timeout") from None
        if line is None:
            self._teardown()
            raise BackendError("worker exited unexpectedly")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            self._teardown()
            raise BackendError(f"worker emitted invalid JSON: {line!r}") from exc
        if not isinstance(message, dict):
            self._teardown()
            raise BackendError(f"worker emitted non-object message: {message!r}")
        return message

    def _teardown(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except Exception:
                pass
        self._proc = None
        self._info = None
