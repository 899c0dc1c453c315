"""``aqpipe`` command line: synth, train, run and report."""

from __future__ import annotations

import argparse
import collections
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .config import Config, load_config
from .core import CHANNELS, MALFUNCTION, MEDIA
from .induction import (
    InductionError,
    build_alarm_dataset,
    build_estimation_dataset,
    evaluate,
    grow_tree,
    prune,
    validation_dataset_from_records,
)
from .ingest import (
    ConfigError,
    StationLogError,
    SyntheticConfig,
    read_station_log,
    save_station_log,
    synthesize_series,
)
from .rulekit import save_model

logger = logging.getLogger("aqpipe")

ROLES = ("imv", "mve", "ica")


class CommandError(Exception):
    """A user-facing failure; the message is printed and the exit code is 2."""


# ---------------------------------------------------------------------------
# commands


def cmd_synth(config: Optional[Config], seed: int, n: int, fault_rate: float, out) -> int:
    interval = config.interval if config is not None else SyntheticConfig.interval
    cfg = SyntheticConfig(seed=seed, n_records=n, fault_rate=fault_rate, interval=interval)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise CommandError(str(exc)) from exc
    records = synthesize_series(cfg)
    try:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        save_station_log(records, out, labeled=True)
    except OSError as exc:
        raise CommandError(f"cannot write {out}: {exc}") from exc
    return len(records)


def _role_dataset(records, role: str, channel: str, config: Config):
    if role == "imv":
        return validation_dataset_from_records(records, channel)
    if role == "mve":
        return build_estimation_dataset(records, channel, config.bins[channel])
    return build_alarm_dataset(records, channel)


def _split(ds, split: str):
    if split == "year":
        return ds.split_year()
    try:
        f = float(split)
    except ValueError:
        raise CommandError(f"--split must be 'year' or a fraction, got {split!r}") from None
    return ds.split_fraction(f)


def cmd_train(input_path, role: str, split: str, out, channel: str = "O3",
              config: Optional[Config] = None, confidence: float = 0.25,
              min_leaf: float = 2) -> dict:
    """Train and evaluate one model; returns the report fields."""
    config = config or Config()
    if role not in ROLES:
        raise CommandError(f"unknown role {role!r}")
    if channel not in CHANNELS:
        raise CommandError(f"unknown channel {channel!r}")
    records = _read_log(input_path, config)
    if role == "imv" and (not records or records[0].tags is None):
        raise CommandError("training the validation model needs a labeled station log")
    ds = _role_dataset(records, role, channel, config)
    try:
        train, test = _split(ds, split)
    except ValueError as exc:
        raise CommandError(str(exc)) from exc
    if test.n_rows == 0:
        raise CommandError("split produces empty test set")
    if np.unique(train.y).size < 2:
        raise CommandError("degenerate labels")
    t0 = time.perf_counter()
    try:
        tree = prune(grow_tree(train, min_leaf=min_leaf), confidence)
    except InductionError as exc:
        raise CommandError(str(exc)) from exc
    elapsed = time.perf_counter() - t0
    ev = evaluate(tree, test)
    provenance = {"input": os.path.basename(str(input_path)), "split": split,
                  "train_rows": train.n_rows, "test_rows": test.n_rows,
                  "confidence": confidence, "min_leaf": min_leaf,
                  "accuracy": round(ev.accuracy, 6)}
    try:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        save_model(out, tree, role.upper(), provenance, channel=channel)
    except OSError as exc:
        raise CommandError(f"cannot write {out}: {exc}") from exc
    return {"evaluation": ev, "leaves": tree.n_leaves, "depth": tree.depth,
            "train_rows": train.n_rows, "test_rows": test.n_rows, "seconds": elapsed}


def cmd_run(config: Config, input_path, mode: Optional[str] = None, out=None):
    """Run the society over a station log; returns the run summary."""
    from .agents.society import Society
    from .config import load_models

    config = config.with_overrides(mode=mode)
    out_dir = Path(out) if out is not None else config.resolve(config.out_dir)
    try:
        models = load_models(config)
    except ConfigError as exc:
        raise CommandError(str(exc)) from exc
    records = _read_log(input_path, config)
    society = Society(config, out_dir, models)
    return society.run(records)


def cmd_report(run_dir) -> str:
    from .agents.database import read_tuples
    from .agents.distribution import ALARM_LOG_NAME, OUTBOX_NAMES, read_jsonl
    from .agents.society import STORE_NAME

    run_dir = Path(run_dir)
    store = run_dir / STORE_NAME
    if not store.exists():
        raise CommandError(f"no tuple store at {store}")
    try:
        rows = read_tuples(store)
    except ValueError as exc:
        raise CommandError(str(exc)) from exc
    outbox = {}
    for m in MEDIA:
        p = run_dir / OUTBOX_NAMES[m]
        if not p.exists():
            raise CommandError(f"no {m} outbox at {p}")
        outbox[m] = read_jsonl(p)
    alarm_log = run_dir / ALARM_LOG_NAME
    if alarm_log.exists():
        alarms = read_jsonl(alarm_log)
    else:
        # fall back to distinct alarms seen in the outboxes
        seen, alarms = set(), []
        for m in MEDIA:
            for a in outbox[m]:
                key = (a["kind"], a["rule_id"], a["channel"], a["at"])
                if key not in seen:
                    seen.add(key)
                    alarms.append(a)
        alarms.sort(key=lambda a: a["at"])

    lines = [f"tuples: {len(rows)} ({sum(r['complete'] == '0' for r in rows)} incomplete)"]
    kinds = collections.Counter(a["kind"] for a in alarms)
    lines.append("alarms: " + ", ".join(f"{k}={kinds.get(k, 0)}"
                                        for k in ("formal", "custom", MALFUNCTION)))
    lines.append("alerts: " + ", ".join(f"{m}={len(outbox[m])}" for m in MEDIA))
    lines.append("")
    lines.append("invalid rate per channel:")
    n = len(rows)
    for ch in CHANNELS:
        bad = sum(r[f"{ch}_tag"] == "I" for r in rows)
        rate = bad / n if n else 0.0
        lines.append(f"  {ch:<4} {bad:>7} / {n:<7} {rate:.4f}")
    lines.append("")
    episodes = [a for a in alarms if a["kind"] == MALFUNCTION]
    lines.append(f"malfunction episodes: {len(episodes)}")
    for a in episodes:
        lines.append(f"  {a['at']}  {a['channel']}  {a['rule_id']}")
    lines.append("")
    lines.append("alarm timeline:")
    for a in alarms:
        lines.append(f"  {a['at']}  {a['kind']:<11} {(a['channel'] or '-'):<4} "
                     f"{a['rule_id']:<16} {a['severity']}")
    return "\n".join(lines) + "\n"


def _read_log(path, config: Config):
    try:
        return read_station_log(path, config.interval)
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc}") from exc
    except StationLogError as exc:
        raise CommandError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aqpipe", description="Air-quality monitoring pipeline.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config (default: $AQPIPE_CONFIG)")

    s = sub.add_parser("synth", help="write a synthetic labeled station log")
    common(s)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--records", type=int, default=16000)
    s.add_argument("--fault-rate", type=float, default=0.05)
    s.add_argument("--out", required=True)

    t = sub.add_parser("train", help="induce and evaluate a decision model")
    common(t)
    t.add_argument("input")
    t.add_argument("--role", choices=ROLES, required=True)
    t.add_argument("--channel", default="O3", choices=CHANNELS)
    t.add_argument("--split", default="year", help="'year' or a training fraction in (0, 1)")
    t.add_argument("--confidence", type=float, default=0.25)
    t.add_argument("--min-leaf", type=float, default=2)
    t.add_argument("--out", required=True)

    r = sub.add_parser("run", help="replay a station log through the agent society")
    common(r)
    r.add_argument("input")
    r.add_argument("--mode", choices=("det", "conc"))
    r.add_argument("--out", help="output directory (overrides config out_dir)")

    rep = sub.add_parser("report", help="summarize the artifacts of a run")
    common(rep)
    rep.add_argument("run_dir", nargs="?")
    rep.add_argument("--out", help="write the report here instead of stdout")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"aqpipe: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "synth":
            n = cmd_synth(config, args.seed, args.records, args.fault_rate, args.out)
            print(f"wrote {n} records to {args.out}")
            return 0
        if args.command == "train":
            res = cmd_train(args.input, args.role, args.split, args.out, args.channel, config,
                            args.confidence, args.min_leaf)
            ev = res["evaluation"]
            print(f"role={args.role} channel={args.channel} split={args.split} "
                  f"train_rows={res['train_rows']} test_rows={res['test_rows']}")
            print(ev.report())
            print(f"held-out accuracy: {100 * ev.accuracy:.2f}%")
            print(f"leaves={res['leaves']} depth={res['depth']}")
            print(f"model written to {args.out}")
            return 0
        if args.command == "run":
            summary = cmd_run(config, args.input, args.mode, args.out)
            print("\n".join(summary.lines()))
            return 0 if summary.clean else 1
        if args.command == "report":
            run_dir = args.run_dir or config.resolve(config.out_dir)
            text = cmd_report(run_dir)
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
            return 0
    except CommandError as exc:
        print(f"aqpipe: {exc}", file=sys.stderr)
        return 2
    return 2  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
