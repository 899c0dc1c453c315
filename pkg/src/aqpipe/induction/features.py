"""Feature construction for the three inductive engines.

Validation rows follow the lag/range attributes of a single channel sampled
quarter-hourly: the current value, the values two and six samples back, and
the max-min spread over the trailing 5 and 11 samples (windows include the
current sample).
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

import numpy as np

from .. import kernels
from ..core import CHANNEL_INDEX, CHANNELS, DEFAULT_BINS, INVALID, LEVELS, TAGS, VALID, LevelBins, qualify_level
from .dataset import Dataset

logger = logging.getLogger(__name__)

LAG_30 = 2
LAG_90 = 6
WINDOW_60 = 5
WINDOW_150 = 11
HISTORY = WINDOW_150  # samples needed before a validation row exists

ALARM_CLASSES = ("none", "alarm")


def validation_feature_names(channel: str) -> tuple:
    return (channel, f"{channel}_30", f"{channel}_90", "MinMax60", "MinMax150")


def validation_class_name(channel: str) -> str:
    return f"{channel}val"


def _spread(window: Sequence[Optional[float]]) -> Optional[float]:
    vals = [v for v in window if v is not None]
    if len(vals) < 2:
        return None
    return max(vals) - min(vals)


def validation_features(history: Sequence[Optional[float]]) -> Optional[tuple]:
    """Validation attributes for the newest sample of ``history``.

    ``history`` lists raw values oldest first, None for absent; returns None
    when fewer than 11 samples are available.
    """
    if len(history) < HISTORY:
        return None
    h = list(history)[-HISTORY:]
    return (h[-1], h[-1 - LAG_30], h[-1 - LAG_90], _spread(h[-WINDOW_60:]), _spread(h))


def build_validation_dataset(values: Sequence[Optional[float]], tags: Optional[Sequence[str]] = None,
                             channel: str = "O3", at: Optional[Sequence[int]] = None) -> Dataset:
    """One row per sample with full history whose current value is present."""
    names = validation_feature_names(channel)
    n = len(values)
    v = np.array([np.nan if x is None else x for x in values], dtype=np.float64)
    if n < HISTORY:
        logger.warning("series of %d samples is shorter than the %d-sample history", n, HISTORY)
        return Dataset(names, np.empty((0, 5)), np.empty(0, dtype=np.int64), TAGS,
                       validation_class_name(channel), np.empty(0, dtype=np.int64))
    mm60 = kernels.window_minmax(v, WINDOW_60)
    mm150 = kernels.window_minmax(v, WINDOW_150)
    t = np.arange(HISTORY - 1, n)
    t = t[~np.isnan(v[t])]
    X = np.column_stack([v[t], v[t - LAG_30], v[t - LAG_90], mm60[t], mm150[t]])
    index = {VALID: 0, INVALID: 1}
    y = np.array([index[tags[i]] for i in t], dtype=np.int64) if tags is not None \
        else np.full(len(t), -1, dtype=np.int64)
    stamps = None if at is None else np.asarray(at, dtype=np.int64)[t]
    return Dataset(names, X, y, TAGS, validation_class_name(channel), stamps)


def validation_dataset_from_records(records, channel: str = "O3") -> Dataset:
    i = CHANNEL_INDEX[channel]
    values = [r.values[i] for r in records]
    tags = [r.tags[i] for r in records] if records and records[0].tags is not None else None
    return build_validation_dataset(values, tags, channel, [r.at for r in records])


def estimation_feature_names(channel: str) -> tuple:
    others = tuple(c for c in CHANNELS if c != channel)
    return others + (f"{channel}_lag1", f"{channel}_lag2")


def build_estimation_dataset(records, channel: str = "O3",
                             bins: Optional[LevelBins] = None) -> Dataset:
    """Rows labeled with the qualitative level of the channel's true value.

    Predictors are the concurrent valid values of the other channels plus the
    last two valid values of the target channel.  Ground truth comes from the
    record's clean values when present, else from valid observations only.
    """
    bins = bins or DEFAULT_BINS[channel]
    names = estimation_feature_names(channel)
    ci = CHANNEL_INDEX[channel]
    others = [CHANNEL_INDEX[c] for c in names[:-2]]
    lags: list = []
    X, y, stamps = [], [], []
    index = {lvl: k for k, lvl in enumerate(LEVELS)}
    for r in records:
        tags = r.tags
        valid = [tags is None or tags[k] == VALID for k in range(len(CHANNELS))]
        if r.truth is not None:
            target = r.truth[ci]
        elif valid[ci] and r.values[ci] is not None:
            target = r.values[ci]
        else:
            target = None
        if target is not None:
            row = [r.values[k] if valid[k] and r.values[k] is not None else math.nan for k in others]
            row.append(lags[-1] if lags else math.nan)
            row.append(lags[-2] if len(lags) > 1 else math.nan)
            X.append(row)
            y.append(index[qualify_level(target, bins)])
            stamps.append(r.at)
        if valid[ci] and r.values[ci] is not None:
            lags.append(r.values[ci])
            del lags[:-2]
    if not X:
        logger.warning("no estimation rows could be built for %s", channel)
    return Dataset(names, np.array(X, dtype=np.float64).reshape(-1, len(names)),
                   np.array(y, dtype=np.int64), LEVELS, f"{channel}level", np.array(stamps))


def alarm_feature_names() -> tuple:
    return CHANNELS


def build_alarm_dataset(records, channel: str = "O3", threshold: float = 130.0,
                        horizon: int = 4) -> Dataset:
    """Custom-alarm rows: does the channel reach ``threshold`` within ``horizon`` samples?

    Predictors are the valid concurrent values of all channels.  Rows without
    any valid future observation of the target are skipped.
    """
    ci = CHANNEL_INDEX[channel]
    n = len(records)
    future = []
    for r in records:
        ok = r.tags is None or r.tags[ci] == VALID
        v = r.values[ci]
        future.append(v if ok and v is not None else math.nan)
    fut = np.array(future, dtype=np.float64)
    X, y, stamps = [], [], []
    for i, r in enumerate(records):
        ahead = fut[i + 1:i + 1 + horizon]
        if i + horizon >= n or np.all(np.isnan(ahead)):
            continue
        tags = r.tags
        X.append([r.values[k] if (tags is None or tags[k] == VALID) and r.values[k] is not None
                  else math.nan for k in range(len(CHANNELS))])
        y.append(1 if np.nanmax(ahead) >= threshold else 0)
        stamps.append(r.at)
    return Dataset(CHANNELS, np.array(X, dtype=np.float64).reshape(-1, len(CHANNELS)),
                   np.array(y, dtype=np.int64), ALARM_CLASSES, f"{channel}alarm", np.array(stamps))
