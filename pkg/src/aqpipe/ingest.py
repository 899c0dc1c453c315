"""Station logs: CSV parsing/writing, a seeded synthetic generator, and replay.

The synthetic generator stands in for a real station archive.  Each channel
follows a diurnal/seasonal base signal with autocorrelated noise; faults are
injected as contiguous episodes and every faulted cell keeps its clean value
and fault kind as ground truth.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .core import (
    CHANNELS,
    INVALID,
    SAMPLING_INTERVAL,
    SANITY_RANGES,
    VALID,
    Measurement,
    from_iso,
    to_iso,
)
from .agents.bus import BusClosed
from .agents.messages import INFORM, AbsentNotice, AgentMessage, NewMeasurement, diagnosis_id

logger = logging.getLogger(__name__)

HEADER = ("timestamp",) + CHANNELS
TAG_HEADER = tuple(f"{c}_tag" for c in CHANNELS)
TAG_CODES = {"V": VALID, "I": INVALID}
TAG_LETTERS = {VALID: "V", INVALID: "I"}

FAULT_KINDS = ("spike", "stuck", "dropout", "drift")
START_2000 = 946684800  # 2000-01-01T00:00:00Z


class StationLogError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MalformedCellWarning(UserWarning):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class StationLogRecord:
    at: int
    values: tuple  # Optional[float] per channel, canonical order
    tags: Optional[tuple] = None  # "valid"/"invalid" per channel when labeled
    truth: Optional[tuple] = None  # clean values, synthetic data only
    faults: Optional[tuple] = None  # fault kind or None per channel, synthetic only

    def value(self, channel: str) -> Optional[float]:
        return self.values[CHANNELS.index(channel)]


# ---------------------------------------------------------------------------
# CSV


def _parse_cell(text: str, lineno: int, column: str) -> Optional[float]:
    text = text.strip()
    if not text:
        return None
    try:
        v = float(text)
    except ValueError:
        v = math.nan
    if not math.isfinite(v):
        warnings.warn(f"line {lineno}: unparseable {column} cell {text!r}; treated as absent",
                      MalformedCellWarning, stacklevel=3)
        return None
    return v


def parse_station_log(stream: IO, interval: int = SAMPLING_INTERVAL) -> list[StationLogRecord]:
    """Parse a station log CSV from a text or byte stream.

    Raises
    ------
    StationLogError
        On a malformed header, a malformed row, or timestamps that are not
        strictly increasing by exactly ``interval`` seconds.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    if not isinstance(stream, io.TextIOBase):
        stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    reader = csv.reader(stream)
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise StationLogError("empty log, header missing", 1) from None
    if header == HEADER:
        labeled = False
    elif header == HEADER + TAG_HEADER:
        labeled = True
    else:
        raise StationLogError("malformed header", 1)
    width = len(header)
    records = []
    prev = None
    n = len(CHANNELS)
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width:
            raise StationLogError(f"expected {width} cells, got {len(row)}", lineno)
        try:
            at = from_iso(row[0])
        except ValueError:
            raise StationLogError(f"bad timestamp {row[0]!r}", lineno) from None
        if at % interval:
            raise StationLogError(f"timestamp {row[0]} not aligned to {interval}s", lineno)
        if prev is not None:
            if at <= prev:
                raise StationLogError("non-monotone timestamp", lineno)
            if at - prev != interval:
                raise StationLogError(f"timestamp gap before {row[0]}", lineno)
        prev = at
        values = tuple(_parse_cell(row[1 + i], lineno, CHANNELS[i]) for i in range(n))
        tags = None
        if labeled:
            tags = []
            for i in range(n):
                cell = row[1 + n + i].strip()
                if cell in TAG_CODES:
                    tags.append(TAG_CODES[cell])
                else:
                    warnings.warn(f"line {lineno}: bad tag {cell!r} for {CHANNELS[i]}; "
                                  "treated as invalid", MalformedCellWarning, stacklevel=2)
                    tags.append(INVALID)
            tags = tuple(tags)
        records.append(StationLogRecord(at, values, tags))
    return records


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def write_station_log(records: Iterable[StationLogRecord], stream: IO,
                      labeled: Optional[bool] = None) -> int:
    """Write records as CSV; labeled output needs tags on every record."""
    records = list(records)
    if labeled is None:
        labeled = bool(records) and all(r.tags is not None for r in records)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HEADER + TAG_HEADER if labeled else HEADER)
    for r in records:
        row = [to_iso(r.at)] + [_fmt(v) for v in r.values]
        if labeled:
            row += [TAG_LETTERS[t] for t in r.tags]
        writer.writerow(row)
    return len(records)


def read_station_log(path, interval: int = SAMPLING_INTERVAL) -> list[StationLogRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_station_log(fh, interval)


def save_station_log(records, path, labeled: Optional[bool] = None) -> int:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        return write_station_log(records, fh, labeled)


# ---------------------------------------------------------------------------
# Synthetic station


@dataclass(frozen=True)
class ChannelSignal:
    mean: float
    amplitude: float
    period: float = 86400.0
    noise: float = 1.0


DEFAULT_SIGNALS: dict[str, ChannelSignal] = {
    "SO2": ChannelSignal(9.0, 5.0, noise=2.0),
    "O3": ChannelSignal(45.0, 95.0, noise=4.0),
    "NO": ChannelSignal(8.0, 35.0, noise=4.0),
    "NO2": ChannelSignal(22.0, 25.0, noise=4.0),
    "NOX": ChannelSignal(0.0, 0.0, noise=2.0),  # derived from NO and NO2
    "VEL": ChannelSignal(3.0, 2.0, noise=0.8),
    "DIR": ChannelSignal(200.0, 80.0, noise=15.0),
    "TEM": ChannelSignal(16.0, 5.0, noise=0.6),
    "HR": ChannelSignal(62.0, 15.0, noise=3.0),
    "RAD": ChannelSignal(0.0, 850.0, noise=25.0),
    "PRE": ChannelSignal(1013.0, 1.5, noise=4.0),
}


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 42
    n_records: int = 16000
    fault_rate: float = 0.05
    fault_kinds: tuple = FAULT_KINDS
    fault_channels: tuple = CHANNELS
    start: int = START_2000
    interval: int = SAMPLING_INTERVAL
    signals: dict = field(default_factory=lambda: dict(DEFAULT_SIGNALS))

    def validate(self) -> None:
        if not 0.0 <= self.fault_rate <= 1.0:
            raise ConfigError(f"fault_rate {self.fault_rate} outside [0, 1]")
        if self.n_records < 0:
            raise ConfigError("n_records must be non-negative")
        unknown = set(self.fault_kinds) - set(FAULT_KINDS)
        if unknown:
            raise ConfigError(f"unknown fault kinds {sorted(unknown)}")
        if self.fault_rate > 0 and not self.fault_kinds:
            raise ConfigError("fault_rate > 0 needs at least one fault kind")
        if self.start % self.interval:
            raise ConfigError("start must be aligned to the sampling interval")


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    """Stationary AR(1) noise with marginal standard deviation ``sigma``."""
    e = rng.standard_normal(n) * sigma * math.sqrt(1.0 - phi * phi)
    if n:
        e[0] = rng.standard_normal() * sigma
    return lfilter([1.0], [1.0, -phi], e)


def _clean_signals(cfg: SyntheticConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    n = cfg.n_records
    s = cfg.signals
    t = cfg.start + cfg.interval * np.arange(n, dtype=np.int64)
    days = (t - START_2000) / 86400.0
    season = np.sin(2 * np.pi * (np.mod(days, 365.25) - 80.0) / 365.25)
    summer = 0.5 * (1.0 + season)

    def phase(ch, shift_h=0.0):
        p = s[ch].period
        return 2 * np.pi * (np.mod(t, p) / p - shift_h * 3600.0 / p)

    hour = np.mod(t, 86400) / 3600.0
    steps_per_day = max(1, int(86400 / cfg.interval))
    out = {}

    solar = np.maximum(0.0, -np.cos(phase("RAD")))
    cloud = np.clip(0.8 + _ar1(rng, n, 1 - 1.0 / steps_per_day, 0.25), 0.2, 1.0)
    rad = s["RAD"].amplitude * (0.55 + 0.45 * summer) * solar * cloud
    out["RAD"] = np.maximum(0.0, rad + solar * _ar1(rng, n, 0.6, s["RAD"].noise))

    tem = (s["TEM"].mean + 8.0 * season - s["TEM"].amplitude * np.cos(phase("TEM", 3.0))
           + _ar1(rng, n, 1 - 1.0 / (3 * steps_per_day), 2.0) + _ar1(rng, n, 0.8, s["TEM"].noise))
    out["TEM"] = tem
    out["HR"] = np.clip(s["HR"].mean - 1.6 * (tem - s["TEM"].mean)
                        + _ar1(rng, n, 0.9, s["HR"].noise), 5.0, 100.0)
    out["PRE"] = (s["PRE"].mean + s["PRE"].amplitude * np.cos(2 * phase("PRE"))
                  + _ar1(rng, n, 1 - 1.0 / (4 * steps_per_day), s["PRE"].noise))
    vel = (s["VEL"].mean - s["VEL"].amplitude * np.cos(phase("VEL", 3.0))
           + _ar1(rng, n, 0.85, s["VEL"].noise))
    out["VEL"] = np.maximum(0.0, vel)
    out["DIR"] = np.mod(s["DIR"].mean + s["DIR"].amplitude * np.sin(phase("DIR"))
                        + _ar1(rng, n, 0.9, s["DIR"].noise), 360.0)

    dilution = 1.0 / (1.0 + out["VEL"] / 4.0)
    traffic = (np.exp(-0.5 * ((hour - 8.0) / 1.2) ** 2)
               + 0.7 * np.exp(-0.5 * ((hour - 19.0) / 1.5) ** 2))
    no = s["NO"].mean + s["NO"].amplitude * traffic * dilution * 1.6
    out["NO"] = np.maximum(0.0, no + _ar1(rng, n, 0.8, s["NO"].noise))
    no2 = s["NO2"].mean + s["NO2"].amplitude * traffic * dilution + 0.3 * out["NO"]
    out["NO2"] = np.maximum(0.0, no2 + _ar1(rng, n, 0.85, s["NO2"].noise))
    out["NOX"] = np.maximum(0.0, out["NO2"] + 1.53 * out["NO"] + _ar1(rng, n, 0.5, s["NOX"].noise))
    so2 = s["SO2"].mean + s["SO2"].amplitude * np.sin(phase("SO2", 6.0)) ** 2
    out["SO2"] = np.maximum(0.0, so2 + _ar1(rng, n, 0.9, s["SO2"].noise))

    # Photochemical ozone: lags radiation by a couple of hours, titrated by NO.
    photo = np.maximum(0.0, -np.cos(phase("O3", 2.0)))
    episode = _ar1(rng, n, 1 - 1.0 / (3 * steps_per_day), 0.18)
    o3 = (s["O3"].mean + s["O3"].amplitude * (0.9 + episode) * photo * cloud
          - 0.35 * out["NO"] + 4.0 * season)
    out["O3"] = np.maximum(2.0, o3 + _ar1(rng, n, 0.85, s["O3"].noise))

    for ch in CHANNELS:
        lo, hi = SANITY_RANGES[ch]
        out[ch] = np.round(np.clip(out[ch], lo, hi), 1)
    return out


_EPISODE_LENGTH = {"spike": (1, 1), "stuck": (4, 12), "dropout": (1, 4), "drift": (4, 12)}


def _inject(cfg: SyntheticConfig, rng: np.random.Generator, ch: str,
            clean: np.ndarray) -> tuple[list, list]:
    """Return observed values (None = dropout) and the fault kind per sample."""
    n = len(clean)
    observed = clean.astype(float).tolist()
    kinds: list = [None] * n
    if cfg.fault_rate == 0.0 or ch not in cfg.fault_channels:
        return observed, kinds
    fk = [k for k in FAULT_KINDS if k in cfg.fault_kinds]
    mean_len = sum(sum(_EPISODE_LENGTH[k]) / 2.0 for k in fk) / len(fk)
    f = cfg.fault_rate
    # Onset probability whose long-run faulted fraction equals fault_rate.
    p_onset = f / (mean_len - f * (mean_len - 1.0))
    sig = cfg.signals[ch]
    scale = max(sig.amplitude, 4.0 * sig.noise)
    onset = rng.random(n)
    i = 0
    while i < n:
        if onset[i] >= p_onset:
            i += 1
            continue
        kind = fk[int(rng.integers(len(fk)))]
        lo, hi = _EPISODE_LENGTH[kind]
        length = min(int(rng.integers(lo, hi + 1)), n - i)
        if kind == "spike":
            observed[i] = round(clean[i] * float(rng.uniform(3.0, 6.0)), 1)
        elif kind == "stuck":
            held = observed[i - 1] if i > 0 and observed[i - 1] is not None else float(clean[i])
            for j in range(i, i + length):
                observed[j] = held
        elif kind == "dropout":
            for j in range(i, i + length):
                observed[j] = None
        else:
            slope = float(rng.uniform(0.1, 0.3)) * scale * (1.0 if rng.random() < 0.5 else -1.0)
            for k, j in enumerate(range(i, i + length), start=1):
                observed[j] = round(float(clean[j]) + slope * k, 1)
        for j in range(i, i + length):
            kinds[j] = kind
        i += length
    return observed, kinds


def synthesize_series(config: SyntheticConfig) -> list[StationLogRecord]:
    """Generate a labeled station log; identical configs give identical output."""
    config.validate()
    n = config.n_records
    if n == 0:
        return []
    rng = np.random.Generator(np.random.PCG64(config.seed))
    clean = _clean_signals(config, rng)
    observed, kinds = {}, {}
    for ch in CHANNELS:
        observed[ch], kinds[ch] = _inject(config, rng, ch, clean[ch])
    clean_lists = {ch: clean[ch].tolist() for ch in CHANNELS}
    records = []
    for i in range(n):
        faults = tuple(kinds[ch][i] for ch in CHANNELS)
        records.append(StationLogRecord(
            at=config.start + i * config.interval,
            values=tuple(observed[ch][i] for ch in CHANNELS),
            tags=tuple(VALID if k is None else INVALID for k in faults),
            truth=tuple(clean_lists[ch][i] for ch in CHANNELS),
            faults=faults,
        ))
    return records


# ---------------------------------------------------------------------------
# Replay


@dataclass
class ReplaySummary:
    records: int = 0
    measurements: int = 0
    absent_notices: int = 0
    aborted: bool = False

    @property
    def messages(self) -> int:
        return self.measurements + self.absent_notices


class VirtualClock:
    """Station time; advanced by the replay driver, never by wall clock."""

    def __init__(self, start: int = 0):
        self.now = start

    def advance_to(self, at: int) -> None:
        if at < self.now:
            raise ValueError("virtual clock cannot run backwards")
        self.now = at


def record_messages(record: StationLogRecord, sender: str = "feed") -> list:
    out = []
    at = record.at
    for ch, v in zip(CHANNELS, record.values):
        if v is None:
            content = AbsentNotice(ch, at)
        else:
            content = NewMeasurement(Measurement(ch, at, v))
        out.append(AgentMessage(INFORM, sender, diagnosis_id(ch), f"{sender}:{at}:{ch}", content))
    return out


def replay(records: Sequence[StationLogRecord], bus, mode: str = "batch",
           clock: Optional[VirtualClock] = None, settle_ticks: int = 2,
           sender: str = "feed") -> ReplaySummary:
    """Feed records into the society, one message per channel per record.

    ``batch`` settles the bus and delivers one idle tick after every record
    before the clock moves on; ``paced`` runs a single scheduling round per
    record and only settles at the end.
    """
    if mode not in ("batch", "paced"):
        raise ValueError(f"unknown replay mode {mode!r}")
    summary = ReplaySummary()
    clock = clock or VirtualClock(records[0].at if records else 0)
    try:
        for r in records:
            clock.advance_to(r.at)
            for msg in record_messages(r, sender):
                bus.send(msg)
                if isinstance(msg.content, AbsentNotice):
                    summary.absent_notices += 1
                else:
                    summary.measurements += 1
            summary.records += 1
            if mode == "batch":
                bus.run_until_idle()
                bus.tick_idle()
            else:
                bus.step()
        bus.run_until_idle()
        for _ in range(settle_ticks):
            bus.tick_idle()
    except BusClosed:
        logger.error("bus closed during replay after %d records", summary.records)
        summary.aborted = True
    return summary
