import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aqpipe.core import (
    CHANNELS,
    DEFAULT_BINS,
    HIGH,
    LEVEL_RANK,
    LOW,
    MEDIUM,
    Alarm,
    LevelBins,
    Measurement,
    MeasurementTuple,
    QualifiedMeasurement,
    QualifyError,
    UserProfile,
    from_iso,
    placeholder,
    qualify_level,
    qualify_trend,
    to_iso,
    update_persistence,
)

O3_BINS = LevelBins(60.0, 120.0)


def qm(level, persistence=1, channel="O3", at=0):
    return QualifiedMeasurement(Measurement(channel, at, 1.0), "valid", level, "steady",
                                persistence)


def test_channels_canonical():
    assert CHANNELS == ("SO2", "O3", "NO", "NO2", "NOX", "VEL", "DIR", "TEM", "HR", "RAD", "PRE")
    assert set(DEFAULT_BINS) == set(CHANNELS)


@pytest.mark.parametrize("value,level", [(45, LOW), (60, MEDIUM), (119.9, MEDIUM),
                                         (120, HIGH), (200, HIGH)])
def test_qualify_level_examples(value, level):
    assert qualify_level(value, O3_BINS) == level


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf, None])
def test_qualify_level_rejects_non_finite(bad):
    with pytest.raises(QualifyError, match="unqualifiable"):
        qualify_level(bad, O3_BINS)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(finite, finite)
def test_qualify_level_monotone(a, b):
    lo, hi = sorted((a, b))
    assert LEVEL_RANK[qualify_level(lo, O3_BINS)] <= LEVEL_RANK[qualify_level(hi, O3_BINS)]


@pytest.mark.parametrize("hist,trend", [([10, 12, 14], "rising"), ([14, 14, 14], "steady"),
                                        ([14, 13, 10], "falling"), ([14, 14.4], "steady"),
                                        ([5], "steady"), ([None, 7, None], "steady"),
                                        ([None, 7, 9], "rising")])
def test_qualify_trend_examples(hist, trend):
    assert qualify_trend(hist, 0.5) == trend


@given(st.lists(st.one_of(st.none(), st.floats(-1e6, 1e6)), max_size=6))
def test_qualify_trend_reversal_flips(hist):
    flip = {"rising": "falling", "falling": "rising", "steady": "steady"}
    assert qualify_trend(hist[::-1]) == flip[qualify_trend(hist)]


def test_update_persistence_examples():
    assert update_persistence(None, LOW) == 1
    assert update_persistence(qm(LOW, 3), LOW) == 4
    assert update_persistence(qm(LOW, 3), HIGH) == 1


@given(st.lists(st.sampled_from([LOW, MEDIUM, HIGH]), min_size=1, max_size=30))
def test_persistence_counts_runs(levels):
    prev = None
    for lvl in levels:
        p = update_persistence(prev, lvl)
        assert p >= 1
        if prev is not None and prev.level == lvl:
            assert p == prev.persistence + 1
        prev = qm(lvl, p)


def test_qualified_measurement_invariants():
    with pytest.raises(ValueError):
        QualifiedMeasurement(Measurement("O3", 0, 1.0), "valid", LOW, estimated=True)
    with pytest.raises(ValueError):
        QualifiedMeasurement(Measurement("O3", 0, 1.0), "valid", LOW, persistence=0)
    ph = placeholder("NO", 900)
    assert ph.value is None and ph.tag == "invalid" and ph.level is None


def test_measurement_rejects_non_finite_and_unknown_channel():
    with pytest.raises(ValueError):
        Measurement("O3", 0, math.inf)
    with pytest.raises(ValueError):
        Measurement("XX", 0, 1.0)


def test_tuple_layout():
    entries = tuple(placeholder(ch, 900) for ch in CHANNELS)
    tup = MeasurementTuple(900, entries, complete=False)
    assert tup["RAD"].channel == "RAD"
    with pytest.raises(ValueError):
        MeasurementTuple(900, entries[::-1])
    with pytest.raises(ValueError):
        MeasurementTuple(1800, entries)


def test_alarm_requires_channel_for_formal():
    with pytest.raises(ValueError):
        Alarm("formal", 0, None, "r", "info", "m")
    a = Alarm("custom", 0, None, "ica-1", "warning", "m")
    assert a.identity == "custom:ica-1:-:0"


def test_profile_matching():
    p = UserProfile.from_dict({"user_id": "u", "subscribed_kinds": ["malfunction"],
                               "medium": "sms", "address": "+1",
                               "subscribed_channels": ["O3"]})
    assert not p.wants(Alarm("malfunction", 0, "NO2", "m", "warning", ""))
    assert p.wants(Alarm("malfunction", 0, "O3", "m", "warning", ""))
    assert not p.wants(Alarm("formal", 0, "O3", "m", "info", ""))
    every = UserProfile.from_dict({"user_id": "v", "subscribed_kinds": ["custom"],
                                   "medium": "email", "address": "v@x"})
    assert every.wants(Alarm("custom", 0, None, "c", "warning", ""))


def test_iso_roundtrip():
    assert to_iso(946684800) == "2000-01-01T00:00:00Z"
    assert from_iso("2000-01-01T00:15:00Z") == 946684800 + 900
