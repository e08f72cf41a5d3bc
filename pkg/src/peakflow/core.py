"""Shared domain types and calendar partition helpers.

Timestamps are timezone-aware datetimes carried in UTC at millisecond
precision; hour-of-day and weekday/weekend classification happen in a
configurable local zone because the intervention being measured is local.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import lru_cache
from typing import Mapping
from zoneinfo import ZoneInfo

UTC = timezone.utc

SourceId = str

DEFAULT_TIMEZONE = "America/New_York"


class ConfigurationError(Exception):
    """Invalid deployment configuration (unknown timezone, bad camera file, ...)."""


class VehicleClass(enum.Enum):
    BICYCLE = "bicycle"
    CAR = "car"
    MOTORCYCLE = "motorcycle"
    BUS = "bus"
    TRUCK = "truck"


# Canonical ordering used everywhere counts are serialized (storage columns,
# wire protocol, pattern codec). Must never be reordered.
VEHICLE_CLASSES: tuple[VehicleClass, ...] = (
    VehicleClass.BICYCLE,
    VehicleClass.CAR,
    VehicleClass.MOTORCYCLE,
    VehicleClass.BUS,
    VehicleClass.TRUCK,
)


class DayType(enum.Enum):
    WEEKDAY = "weekday"
    WEEKEND = "weekend"


class Period(enum.Enum):
    BEFORE = "before"
    AFTER = "after"


def zero_counts() -> dict[VehicleClass, int]:
    return {cls: 0 for cls in VEHICLE_CLASSES}


def _require_aware(t: datetime, what: str = "timestamp") -> datetime:
    if t.tzinfo is None:
        raise ValueError(f"{what} must be timezone-aware")
    return t


def to_epoch_ms(t: datetime) -> int:
    """Aware datetime -> integer epoch milliseconds (round-trips exactly)."""
    _require_aware(t)
    return round(t.timestamp() * 1000)


def from_epoch_ms(ms: int) -> datetime:
    """Integer epoch milliseconds -> aware UTC datetime."""
    return datetime.fromtimestamp(ms / 1000.0, tz=UTC)


def utc_now() -> datetime:
    return datetime.now(tz=UTC)


@lru_cache(maxsize=64)
def _zone(tz: str) -> ZoneInfo:
    try:
        return ZoneInfo(tz)
    except Exception as exc:
        raise ConfigurationError(f"unknown timezone {tz!r}") from exc


@dataclass(frozen=True)
class Observation:
    """One counted sample for a source at an instant."""

    source: SourceId
    captured_at: datetime
    counts: Mapping[VehicleClass, int]
    total: int

    def __post_init__(self) -> None:
        _require_aware(self.captured_at, "captured_at")
        if any(v < 0 for v in self.counts.values()):
            raise ValueError("counts must be non-negative")
        if self.total != sum(self.counts.values()):
            raise ValueError("total must equal the sum of per-class counts")

    @classmethod
    def from_counts(
        cls, source: SourceId, captured_at: datetime, counts: Mapping[VehicleClass, int]
    ) -> "Observation":
        return cls(source, captured_at, dict(counts), sum(counts.values()))


@dataclass(frozen=True)
class ObservationSeries:
    """Time-ordered observations for a single source."""

    source: SourceId
    items: tuple[Observation, ...]

    def __post_init__(self) -> None:
        for prev, cur in zip(self.items, self.items[1:]):
            if cur.captured_at < prev.captured_at:
                raise ValueError("observations must be ordered by captured_at")
        for obs in self.items:
            if obs.source != self.source:
                raise ValueError("all observations must share the series source")

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class SplitConfig:
    """Instant separating the before/after periods, plus the zone used for
    hour and day-type derivation."""

    split_at: datetime
    timezone: str = DEFAULT_TIMEZONE

    def __post_init__(self) -> None:
        _require_aware(self.split_at, "split_at")
        _zone(self.timezone)


def default_split() -> SplitConfig:
    """Intervention default: local midnight, 2025-01-05, New York."""
    return SplitConfig(
        split_at=datetime(2025, 1, 5, 0, 0, 0, tzinfo=_zone(DEFAULT_TIMEZONE)),
        timezone=DEFAULT_TIMEZONE,
    )


@dataclass(frozen=True)
class TimeWindow:
    """Inclusive local-hour interval [start_hour, end_hour]."""

    start_hour: int
    end_hour: int
    label: str

    def __post_init__(self) -> None:
        if not (0 <= self.start_hour <= 23 and 0 <= self.end_hour <= 23):
            raise ValueError("window hours must be within [0, 23]")
        if self.start_hour > self.end_hour:
            raise ValueError("start_hour must not exceed end_hour")

    def hours(self) -> range:
        return range(self.start_hour, self.end_hour + 1)


def hour_of(t: datetime, tz: str) -> int:
    """Local wall-clock hour of `t` in zone `tz` (DST-aware)."""
    return _require_aware(t).astimezone(_zone(tz)).hour


def day_type_of(t: datetime, tz: str) -> DayType:
    """Weekend iff the local date in `tz` falls on Saturday or Sunday."""
    local = _require_aware(t).astimezone(_zone(tz))
    return DayType.WEEKEND if local.weekday() >= 5 else DayType.WEEKDAY


def period_of(t: datetime, split: SplitConfig) -> Period:
    """Before iff t < split_at; the boundary instant itself counts as after."""
    return Period.BEFORE if _require_aware(t) < split.split_at else Period.AFTER
