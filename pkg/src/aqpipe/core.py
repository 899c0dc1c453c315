"""Domain types shared across the pipeline and qualitative interpretation of values.

Channels, levels and trends are plain strings so that messages, CSV rows and
model documents can carry them without conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import NamedTuple, Optional, Sequence

CHANNELS: tuple[str, ...] = (
    "SO2", "O3", "NO", "NO2", "NOX", "VEL", "DIR", "TEM", "HR", "RAD", "PRE",
)
CHANNEL_INDEX = {c: i for i, c in enumerate(CHANNELS)}

UNITS = {
    "SO2": "ug/m3", "O3": "ug/m3", "NO": "ug/m3", "NO2": "ug/m3", "NOX": "ug/m3",
    "VEL": "m/s", "DIR": "deg", "TEM": "degC", "HR": "%", "RAD": "W/m2", "PRE": "hPa",
}

SAMPLING_INTERVAL = 900

VALID = "valid"
INVALID = "invalid"
TAGS = (VALID, INVALID)

LOW, MEDIUM, HIGH = "low", "medium", "high"
LEVELS = (LOW, MEDIUM, HIGH)
LEVEL_RANK = {LOW: 0, MEDIUM: 1, HIGH: 2}

FALLING, STEADY, RISING = "falling", "steady", "rising"
TRENDS = (FALLING, STEADY, RISING)

FORMAL, CUSTOM, MALFUNCTION = "formal", "custom", "malfunction"
ALARM_KINDS = (FORMAL, CUSTOM, MALFUNCTION)
SEVERITIES = ("info", "warning", "alert")
MEDIA = ("email", "sms")


class QualifyError(ValueError):
    pass


class LevelBins(NamedTuple):
    lo: float
    hi: float


# Implementer defaults sized for the synthetic station; override per deployment.
DEFAULT_BINS: dict[str, LevelBins] = {
    "SO2": LevelBins(20.0, 50.0),
    "O3": LevelBins(60.0, 120.0),
    "NO": LevelBins(20.0, 60.0),
    "NO2": LevelBins(40.0, 100.0),
    "NOX": LevelBins(80.0, 200.0),
    "VEL": LevelBins(2.0, 6.0),
    "DIR": LevelBins(120.0, 240.0),
    "TEM": LevelBins(10.0, 25.0),
    "HR": LevelBins(40.0, 75.0),
    "RAD": LevelBins(200.0, 600.0),
    "PRE": LevelBins(1005.0, 1020.0),
}

# Physically plausible ranges, used when no validation model is loaded.
SANITY_RANGES: dict[str, tuple[float, float]] = {
    "SO2": (0.0, 500.0),
    "O3": (0.0, 400.0),
    "NO": (0.0, 800.0),
    "NO2": (0.0, 400.0),
    "NOX": (0.0, 1500.0),
    "VEL": (0.0, 60.0),
    "DIR": (0.0, 360.0),
    "TEM": (-30.0, 50.0),
    "HR": (0.0, 100.0),
    "RAD": (0.0, 1400.0),
    "PRE": (900.0, 1090.0),
}


def check_channel(channel: str) -> str:
    if channel not in CHANNEL_INDEX:
        raise ValueError(f"unknown channel {channel!r}")
    return channel


def to_iso(at: int) -> str:
    return datetime.fromtimestamp(at, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def from_iso(text: str) -> int:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def year_of(at: int) -> int:
    return datetime.fromtimestamp(at, tz=timezone.utc).year


@dataclass(frozen=True, slots=True)
class Measurement:
    """One sensor reading; ``value is None`` is the absent (dropout) state."""

    channel: str
    at: int
    value: Optional[float]

    def __post_init__(self):
        if self.channel not in CHANNEL_INDEX:
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.value is not None and not math.isfinite(self.value):
            raise ValueError(f"non-finite value for {self.channel}")


@dataclass(frozen=True, slots=True)
class QualifiedMeasurement:
    base: Measurement
    tag: str
    level: Optional[str]
    trend: str = STEADY
    persistence: int = 0
    estimated: bool = False

    def __post_init__(self):
        if self.estimated and self.tag != INVALID:
            raise ValueError("estimated measurements must be tagged invalid")
        if self.level is not None and self.persistence < 1:
            raise ValueError("persistence must be >= 1 when level is defined")

    @property
    def channel(self) -> str:
        return self.base.channel

    @property
    def at(self) -> int:
        return self.base.at

    @property
    def value(self) -> Optional[float]:
        return self.base.value

    @property
    def usable_value(self) -> Optional[float]:
        """The raw value if it passed validation, else None."""
        return self.base.value if self.tag == VALID else None


def placeholder(channel: str, at: int) -> QualifiedMeasurement:
    """Stand-in entry for a channel that never reported before tuple closure."""
    return QualifiedMeasurement(Measurement(channel, at, None), INVALID, None)


@dataclass(frozen=True, slots=True)
class MeasurementTuple:
    at: int
    entries: tuple[QualifiedMeasurement, ...]
    complete: bool = True

    def __post_init__(self):
        if len(self.entries) != len(CHANNELS):
            raise ValueError("a tuple holds exactly one entry per channel")
        for ch, qm in zip(CHANNELS, self.entries):
            if qm.channel != ch or qm.at != self.at:
                raise ValueError(f"entry for {qm.channel}@{qm.at} out of place")

    def __getitem__(self, channel: str) -> QualifiedMeasurement:
        return self.entries[CHANNEL_INDEX[channel]]


@dataclass(frozen=True, slots=True)
class Alarm:
    kind: str
    at: int
    channel: Optional[str]
    rule_id: str
    severity: str
    message: str

    def __post_init__(self):
        if self.kind not in ALARM_KINDS:
            raise ValueError(f"unknown alarm kind {self.kind!r}")
        if self.kind in (FORMAL, MALFUNCTION) and self.channel is None:
            raise ValueError(f"{self.kind} alarms need a channel")
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity {self.severity!r}")

    @property
    def identity(self) -> str:
        return f"{self.kind}:{self.rule_id}:{self.channel or '-'}:{self.at}"


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    subscribed_kinds: frozenset
    medium: str
    address: str
    subscribed_channels: Optional[frozenset] = None  # None means all channels

    def __post_init__(self):
        if self.medium not in MEDIA:
            raise ValueError(f"unknown medium {self.medium!r}")
        bad = set(self.subscribed_kinds) - set(ALARM_KINDS)
        if bad:
            raise ValueError(f"unknown alarm kinds {sorted(bad)}")

    def wants(self, alarm: Alarm) -> bool:
        if alarm.kind not in self.subscribed_kinds:
            return False
        if alarm.channel is None or self.subscribed_channels is None:
            return True
        return alarm.channel in self.subscribed_channels

    @classmethod
    def from_dict(cls, d: dict) -> "UserProfile":
        channels = d.get("subscribed_channels", "all")
        return cls(
            user_id=d["user_id"],
            subscribed_kinds=frozenset(d["subscribed_kinds"]),
            medium=d["medium"],
            address=d["address"],
            subscribed_channels=None if channels == "all" else frozenset(channels),
        )


@dataclass(frozen=True)
class Alert:
    alarm: Alarm
    recipient: str
    medium: str
    rendered: str = field(repr=False)


def qualify_level(value: float, bins: LevelBins) -> str:
    """Map a value to low/medium/high; the lower cut belongs to the upper class."""
    if value is None or not math.isfinite(value):
        raise QualifyError("unqualifiable")
    if value < bins.lo:
        return LOW
    if value < bins.hi:
        return MEDIUM
    return HIGH


def qualify_trend(history: Sequence[Optional[float]], epsilon: float = 0.5) -> str:
    """Compare the oldest and newest defined values in ``history``.

    Fewer than two defined values yields ``steady``.
    """
    defined = [v for v in history if v is not None]
    if len(defined) < 2:
        return STEADY
    delta = defined[-1] - defined[0]
    if delta > epsilon:
        return RISING
    if -delta > epsilon:
        return FALLING
    return STEADY


def update_persistence(previous: Optional[QualifiedMeasurement], level: str) -> int:
    if previous is not None and previous.level == level:
        return previous.persistence + 1
    return 1
