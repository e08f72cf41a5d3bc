"""Pixel header codec carrying per-class counts inside a camera frame.

The simulator stamps a strip of solid gray blocks across the top of every
frame it serves; the built-in detector stub reads the strip back and recovers
the exact counts. The whole capture -> discard -> batch -> detect -> store
path can therefore be verified end to end with zero ML involved.

Encoding: one base-8 digit per block, gray level 16 + 32*digit. Blocks are
16x16 (8x8 when the frame is narrower than 304px) and aligned to the JPEG
8x8 DCT grid, so a lossy round trip moves interior pixels by a few gray
levels at most while digits sit 32 levels apart. Layout: 3 magic digits,
3 digits per vehicle class (base-8, most significant first, canonical class
order), 1 checksum digit (digit sum mod 8).
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .core import VEHICLE_CLASSES, VehicleClass, zero_counts

MAGIC = (7, 0, 5)
DIGITS_PER_CLASS = 3
N_BLOCKS = len(MAGIC) + DIGITS_PER_CLASS * len(VEHICLE_CLASSES) + 1
BLOCK = 16
SMALL_BLOCK = 8
MAX_COUNT = 255

_LEVEL_BASE = 16
_LEVEL_STEP = 32


def _block_size(width: int) -> int:
    if width >= N_BLOCKS * BLOCK:
        return BLOCK
    if width >= N_BLOCKS * SMALL_BLOCK:
        return SMALL_BLOCK
    raise ValueError(f"frame width {width} too narrow for a {N_BLOCKS}-block header")


def _digits(counts: Mapping[VehicleClass, int]) -> list[int]:
    digits: list[int] = []
    for cls in VEHICLE_CLASSES:
        value = int(counts.get(cls, 0))
        if not (0 <= value <= MAX_COUNT):
            raise ValueError(f"count for {cls.value} must be in [0, {MAX_COUNT}], got {value}")
        digits.extend(((value >> 6) & 0o7, (value >> 3) & 0o7, value & 0o7))
    return digits


def encode_counts(image: np.ndarray, counts: Mapping[VehicleClass, int]) -> None:
    """Stamp the header strip onto `image` (uint8, HxW or HxWxC) in place."""
    if image.ndim not in (2, 3) or image.shape[0] == 0 or image.shape[1] == 0:
        raise ValueError("image must be a non-empty HxW or HxWxC array")
    size = _block_size(image.shape[1])
    if image.shape[0] < size:
        raise ValueError("image too short for the header strip")
    digits = list(MAGIC) + _digits(counts)
    digits.append(sum(digits[len(MAGIC):]) % 8)
    for i, digit in enumerate(digits):
        level = _LEVEL_BASE + _LEVEL_STEP * digit
        image[0:size, i * size : (i + 1) * size, ...] = level


def decode_counts(image: np.ndarray) -> dict[VehicleClass, int] | None:
    """Recover counts from a frame's header strip.

    Returns None when no valid header is present (wrong magic, bad checksum,
    or frame too small); callers treat that as an unpatterned image.
    """
    if image.ndim not in (2, 3) or image.shape[0] == 0 or image.shape[1] == 0:
        return None
    gray = image.astype(np.float64)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    for size in (BLOCK, SMALL_BLOCK):
        if gray.shape[1] >= N_BLOCKS * size and gray.shape[0] >= size:
            decoded = _decode_at(gray, size)
            if decoded is not None:
                return decoded
    return None


def _decode_at(gray: np.ndarray, size: int) -> dict[VehicleClass, int] | None:
    lo = size // 4
    hi = size - lo
    digits: list[int] = []
    for i in range(N_BLOCKS):
        center = gray[lo:hi, i * size + lo : i * size + hi]
        level = float(center.mean())
        digit = int(round((level - _LEVEL_BASE) / _LEVEL_STEP))
        if not (0 <= digit <= 7):
            return None
        # Reject samples too far from any legal level: real imagery, not a header.
        if abs(level - (_LEVEL_BASE + _LEVEL_STEP * digit)) > _LEVEL_STEP / 4:
            return None
        digits.append(digit)
    if tuple(digits[: len(MAGIC)]) != MAGIC:
        return None
    payload = digits[len(MAGIC) : len(MAGIC) + DIGITS_PER_CLASS * len(VEHICLE_CLASSES)]
    if digits[-1] != sum(payload) % 8:
        return None
    counts = zero_counts()
    for k, cls in enumerate(VEHICLE_CLASSES):
        d0, d1, d2 = payload[3 * k : 3 * k + 3]
        counts[cls] = (d0 << 6) | (d1 << 3) | d2
    return counts
