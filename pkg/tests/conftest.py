import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from aqpipe.config import Config, LoadedModels  # noqa: E402
from aqpipe.core import CHANNELS, UserProfile  # noqa: E402
from aqpipe.induction import (  # noqa: E402
    build_alarm_dataset,
    build_estimation_dataset,
    grow_tree,
    prune,
    validation_dataset_from_records,
)
from aqpipe.ingest import START_2000, StationLogRecord, SyntheticConfig, synthesize_series  # noqa: E402
from aqpipe.rulekit import export_model, import_model  # noqa: E402

_AC_RESULTS = {}


@pytest.fixture(scope="session")
def synth16k():
    return synthesize_series(SyntheticConfig(seed=42, n_records=16000, fault_rate=0.05))


@pytest.fixture(scope="session")
def o3_models(synth16k):
    def doc(tree, role):
        return import_model(export_model(tree, role, channel="O3"))
    imv = prune(grow_tree(validation_dataset_from_records(synth16k, "O3")))
    mve = prune(grow_tree(build_estimation_dataset(synth16k, "O3")))
    ica = prune(grow_tree(build_alarm_dataset(synth16k, "O3")))
    return LoadedModels({"O3": doc(imv, "IMV")}, {"O3": doc(mve, "MVE")}, doc(ica, "ICA"))


@pytest.fixture
def profiles():
    return (
        UserProfile("ops", frozenset({"formal", "custom", "malfunction"}), "email", "ops@example.org"),
        UserProfile("mayor", frozenset({"formal"}), "sms", "+300000", frozenset({"O3"})),
        UserProfile("lab", frozenset({"malfunction"}), "email", "lab@example.org",
                    frozenset({"NO2", "NO"})),
    )


@pytest.fixture
def plain_config(profiles):
    """Range-check validation only, no models required."""
    return Config(profiles=profiles, required_models=())


def baseline_row():
    return {"SO2": 8.0, "O3": 50.0, "NO": 10.0, "NO2": 25.0, "NOX": 40.0, "VEL": 3.0,
            "DIR": 180.0, "TEM": 15.0, "HR": 60.0, "RAD": 100.0, "PRE": 1013.0}


def make_records(rows, start=START_2000, interval=900, tags=None):
    """Station log records from dicts of channel values (missing keys are absent)."""
    out = []
    for i, row in enumerate(rows):
        values = tuple(row.get(ch) for ch in CHANNELS)
        t = None if tags is None else tuple(tags[i])
        out.append(StationLogRecord(start + i * interval, values, t))
    return out


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_ac"):
        return
    ac = "AC-" + str(int(name[7:9]))
    if report.when == "call" or report.outcome != "passed":
        detail = dict(report.user_properties).get("detail", "")
        prev = _AC_RESULTS.get(ac)
        if prev is None or prev[0] == "PASS":
            _AC_RESULTS[ac] = ("PASS" if report.outcome == "passed" else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _AC_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(_AC_RESULTS, key=lambda a: int(a[3:])):
        status, detail = _AC_RESULTS[ac]
        terminalreporter.write_line(f"{ac:<6} {status}  {detail}")
