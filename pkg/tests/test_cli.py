import hashlib
import json

import pytest

from conftest import baseline_row, make_records
from aqpipe.agents.database import read_tuples
from aqpipe.agents.distribution import read_jsonl
from aqpipe.cli import main
from aqpipe.ingest import read_station_log, save_station_log
from aqpipe.rulekit import load_model

PROFILES = [
    {"user_id": "ops", "subscribed_kinds": ["formal", "custom", "malfunction"],
     "medium": "email", "address": "ops@example.org"},
    {"user_id": "mayor", "subscribed_kinds": ["formal"], "medium": "sms",
     "address": "+300000", "subscribed_channels": ["O3"]},
]


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_config(tmp_path, **extra):
    cfg = {"required_models": [], "profiles": PROFILES, "out_dir": "runs/default"}
    cfg.update(extra)
    p = tmp_path / "config.json"
    p.write_text(json.dumps(cfg))
    return p


def write_log(tmp_path, rows, name="log.csv"):
    p = tmp_path / name
    save_station_log(make_records(rows), p)
    return p


@pytest.fixture(scope="module")
def small_log(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    out = d / "s.csv"
    assert main(["synth", "--seed", "7", "--records", "3000", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def long_log(tmp_path_factory):
    # long enough to reach the summer ozone peaks the custom model learns
    out = tmp_path_factory.mktemp("synth") / "l.csv"
    assert main(["synth", "--seed", "7", "--records", "16000", "--out", str(out)]) == 0
    return out


# -- synth ------------------------------------------------------------------


def test_synth_deterministic(tmp_path, capsys):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert main(["synth", "--seed", "42", "--records", "500", "--out", str(a)]) == 0
    assert "wrote 500 records" in capsys.readouterr().out
    main(["synth", "--seed", "42", "--records", "500", "--out", str(b)])
    main(["synth", "--seed", "43", "--records", "500", "--out", str(c)])
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    recs = read_station_log(a)
    assert len(recs) == 500 and recs[0].tags is not None


def test_synth_zero_records(tmp_path):
    out = tmp_path / "z.csv"
    assert main(["synth", "--records", "0", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("timestamp,SO2,O3")


def test_synth_bad_fault_rate(tmp_path, capsys):
    assert main(["synth", "--fault-rate", "2", "--out", str(tmp_path / "x.csv")]) == 2
    assert "fault" in capsys.readouterr().err


# -- train ------------------------------------------------------------------


def test_train_imv(small_log, tmp_path, capsys):
    out = tmp_path / "imv.aqmodel.json"
    before = digest(small_log)
    assert main(["train", str(small_log), "--role", "imv", "--split", "0.5",
                 "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "held-out accuracy:" in text and "accuracy=" in text
    doc = load_model(out)
    assert doc.role == "IMV" and doc.channel == "O3"
    assert doc.provenance["split"] == "0.5" and doc.provenance["test_rows"] > 0
    assert digest(small_log) == before


@pytest.mark.parametrize("role", ["mve", "ica"])
def test_train_other_roles(long_log, tmp_path, role):
    out = tmp_path / f"{role}.aqmodel.json"
    assert main(["train", str(long_log), "--role", role, "--split", "0.5",
                 "--out", str(out)]) == 0
    assert load_model(out).role == role.upper()


def test_ica_degenerate_on_winter_data(small_log, tmp_path, capsys):
    assert main(["train", str(small_log), "--role", "ica", "--split", "0.5",
                 "--out", str(tmp_path / "m.json")]) == 2
    assert "degenerate labels" in capsys.readouterr().err


def test_train_degenerate_labels(tmp_path, capsys):
    clean = tmp_path / "clean.csv"
    main(["synth", "--records", "2000", "--fault-rate", "0", "--out", str(clean)])
    assert main(["train", str(clean), "--role", "imv", "--split", "0.5",
                 "--out", str(tmp_path / "m.json")]) == 2
    assert "degenerate labels" in capsys.readouterr().err
    assert not (tmp_path / "m.json").exists()


def test_train_single_year_split(small_log, tmp_path, capsys):
    assert main(["train", str(small_log), "--role", "imv", "--split", "year",
                 "--out", str(tmp_path / "m.json")]) == 2
    assert "split produces empty test set" in capsys.readouterr().err


def test_train_unlabeled_log(tmp_path, capsys):
    log = write_log(tmp_path, [baseline_row()] * 30)
    assert main(["train", str(log), "--role", "imv", "--split", "0.5",
                 "--out", str(tmp_path / "m.json")]) == 2
    assert "labeled" in capsys.readouterr().err


# -- run --------------------------------------------------------------------


def test_run_single_exceedance(tmp_path, capsys):
    rows = [baseline_row() for _ in range(30)]
    rows[12]["O3"] = 200.0
    log = write_log(tmp_path, rows)
    cfg = write_config(tmp_path)
    before = (digest(log), digest(cfg))
    out = tmp_path / "run"
    assert main(["run", str(log), "--config", str(cfg), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "alarms.formal=1" in text and "tuples_stored=30" in text
    alarms = read_jsonl(out / "alarms.jsonl")
    assert [(a["kind"], a["rule_id"], a["at"]) for a in alarms] == \
        [("formal", "O3-info", "2000-01-01T03:00:00Z")]
    assert len(read_jsonl(out / "sms.outbox.jsonl")) == 1
    assert len(read_tuples(out / "tuples.csv")) == 30
    assert (digest(log), digest(cfg)) == before


def test_run_clean_input_no_alarms(tmp_path, capsys):
    log = write_log(tmp_path, [baseline_row() for _ in range(20)])
    assert main(["run", str(log), "--config", str(write_config(tmp_path))]) == 0
    out = tmp_path / "runs/default"
    assert read_jsonl(out / "alarms.jsonl") == []
    assert "alarms.formal=0" in capsys.readouterr().out


def test_run_missing_required_model(tmp_path, capsys):
    log = write_log(tmp_path, [baseline_row()])
    cfg = write_config(tmp_path, required_models=["O3/imv"])
    assert main(["run", str(log), "--config", str(cfg), "--out", str(tmp_path / "r")]) == 2
    assert "O3/imv" in capsys.readouterr().err
    assert not (tmp_path / "r").exists()


def test_run_schema_mismatch(small_log, tmp_path, capsys):
    mve = tmp_path / "mve.aqmodel.json"
    main(["train", str(small_log), "--role", "mve", "--split", "0.5", "--out", str(mve)])
    cfg = write_config(tmp_path, models={"O3": {"imv": mve.name}})
    assert main(["run", str(small_log), "--config", str(cfg), "--out", str(tmp_path / "r")]) == 2
    assert "do not match" in capsys.readouterr().err
    assert not (tmp_path / "r").exists()


def test_run_with_trained_models(small_log, long_log, tmp_path):
    for role in ("imv", "mve", "ica"):
        assert main(["train", str(long_log), "--role", role, "--split", "0.5",
                     "--out", str(tmp_path / f"{role}.aqmodel.json")]) == 0
    cfg = write_config(tmp_path, models={"O3": {"imv": "imv.aqmodel.json",
                                                "mve": "mve.aqmodel.json"}},
                       ica_model="ica.aqmodel.json", required_models=["O3/imv", "O3/mve", "ica"])
    out = tmp_path / "r"
    assert main(["run", str(small_log), "--config", str(cfg), "--out", str(out),
                 "--mode", "det"]) == 0
    assert len(read_tuples(out / "tuples.csv")) == 3000
    assert (out / "messages.jsonl").stat().st_size > 0


def test_run_bad_log(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,O3\n")
    assert main(["run", str(bad), "--config", str(write_config(tmp_path))]) == 2
    assert "malformed header" in capsys.readouterr().err


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"nonsense": 1}))
    assert main(["synth", "--config", str(p), "--out", str(tmp_path / "x.csv")]) == 2
    assert "unknown config keys" in capsys.readouterr().err


# -- report -----------------------------------------------------------------


def test_report_malfunction_episodes(tmp_path, capsys, monkeypatch):
    rows = [baseline_row() for _ in range(60)]
    for start in (5, 20, 40):
        for i in range(start, start + 5):
            rows[i]["NO2"] = -50.0
    log = write_log(tmp_path, rows)
    cfg = write_config(tmp_path)
    monkeypatch.setenv("AQPIPE_CONFIG", str(cfg))
    assert main(["run", str(log)]) == 0
    capsys.readouterr()
    assert main(["report"]) == 0
    text = capsys.readouterr().out
    assert "malfunction episodes: 3" in text
    assert "tuples: 60 (0 incomplete)" in text
    no2 = [line for line in text.splitlines() if line.strip().startswith("NO2 ")][0]
    assert no2.split()[1:4] == ["15", "/", "60"]
    assert "malfunction=3" in text


def test_report_empty_store(tmp_path, capsys):
    log = write_log(tmp_path, [])
    out = tmp_path / "r"
    assert main(["run", str(log), "--config", str(write_config(tmp_path)), "--out", str(out)]) == 0
    capsys.readouterr()
    report = tmp_path / "report.txt"
    assert main(["report", str(out), "--out", str(report)]) == 0
    text = report.read_text()
    assert text.startswith("tuples: 0 (0 incomplete)") and "formal=0" in text


def test_report_falls_back_to_outboxes(tmp_path, capsys):
    rows = [baseline_row() for _ in range(10)]
    rows[3]["O3"] = 250.0
    out = tmp_path / "r"
    main(["run", str(write_log(tmp_path, rows)), "--config", str(write_config(tmp_path)),
          "--out", str(out)])
    (out / "alarms.jsonl").unlink()
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    assert "formal=2" in capsys.readouterr().out


def test_report_missing_artifacts(tmp_path, capsys):
    assert main(["report", str(tmp_path / "nowhere")]) == 2
    assert "no tuple store" in capsys.readouterr().err
