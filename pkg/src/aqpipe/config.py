"""Pipeline configuration: a single JSON file, overridable from the command line."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .core import CHANNELS, DEFAULT_BINS, LEVELS, SAMPLING_INTERVAL, TAGS, LevelBins, UserProfile
from .induction.features import ALARM_CLASSES, estimation_feature_names, validation_feature_names
from .ingest import ConfigError
from .rulekit import DEFAULT_THRESHOLDS, ModelDocument, ModelError, ThresholdRule, load_model

ENV_CONFIG = "AQPIPE_CONFIG"
MODES = {"det": "det", "deterministic": "det", "conc": "conc", "concurrent": "conc"}
MODEL_ROLES = ("imv", "mve")
DEFAULT_REQUIRED = ("O3/imv", "O3/mve")


@dataclass
class Config:
    interval: int = SAMPLING_INTERVAL
    bins: dict = field(default_factory=lambda: dict(DEFAULT_BINS))
    trend_epsilon: float = 0.5
    trend_window: int = 3
    malfunction_k: int = 4
    assembly_timeout: int = 2
    thresholds: tuple = DEFAULT_THRESHOLDS
    models: dict = field(default_factory=dict)  # channel -> {"imv": path, "mve": path}
    ica_model: Optional[str] = None
    required_models: tuple = DEFAULT_REQUIRED
    profiles: tuple = ()
    out_dir: str = "run"
    message_log: bool = True
    mode: str = "det"
    base_dir: str = "."

    def resolve(self, path: Optional[str]) -> Optional[Path]:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def with_overrides(self, **kw) -> "Config":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "mode" in kw:
            kw["mode"] = _mode(kw["mode"])
        return replace(self, **kw)


def _mode(text: str) -> str:
    try:
        return MODES[text]
    except KeyError:
        raise ConfigError(f"unknown scheduler mode {text!r}") from None


def config_from_dict(d: dict, base_dir: str = ".") -> Config:
    cfg = Config(base_dir=base_dir)
    known = {"interval", "bins", "trend_epsilon", "trend_window", "malfunction_k",
             "assembly_timeout", "thresholds", "models", "ica_model", "required_models",
             "profiles", "out_dir", "message_log", "mode"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kw: dict = {}
    try:
        if "interval" in d:
            kw["interval"] = int(d["interval"])
        if "bins" in d:
            bins = dict(DEFAULT_BINS)
            for ch, (lo, hi) in d["bins"].items():
                if ch not in CHANNELS:
                    raise ConfigError(f"bins: unknown channel {ch!r}")
                if not lo < hi:
                    raise ConfigError(f"bins for {ch}: lower cut must be below upper cut")
                bins[ch] = LevelBins(float(lo), float(hi))
            kw["bins"] = bins
        for key, conv in (("trend_epsilon", float), ("trend_window", int),
                          ("malfunction_k", int), ("assembly_timeout", int)):
            if key in d:
                kw[key] = conv(d[key])
        if "thresholds" in d:
            kw["thresholds"] = tuple(ThresholdRule.from_dict(t) for t in d["thresholds"])
        if "models" in d:
            models = {}
            for ch, roles in d["models"].items():
                if ch not in CHANNELS:
                    raise ConfigError(f"models: unknown channel {ch!r}")
                bad = set(roles) - set(MODEL_ROLES)
                if bad:
                    raise ConfigError(f"models for {ch}: unknown roles {sorted(bad)}")
                models[ch] = dict(roles)
            kw["models"] = models
        if "ica_model" in d:
            kw["ica_model"] = d["ica_model"]
        if "required_models" in d:
            kw["required_models"] = tuple(d["required_models"])
        if "profiles" in d:
            kw["profiles"] = tuple(UserProfile.from_dict(p) for p in d["profiles"])
        for key in ("out_dir", "message_log"):
            if key in d:
                kw[key] = d[key]
        if "mode" in d:
            kw["mode"] = _mode(d["mode"])
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    if kw.get("malfunction_k", 1) < 1:
        raise ConfigError("malfunction_k must be at least 1")
    return replace(cfg, **kw)


def load_config(path: Optional[str] = None) -> Config:
    """Config from ``path``, else ``$AQPIPE_CONFIG``, else built-in defaults."""
    path = path or os.environ.get(ENV_CONFIG)
    if not path:
        return Config()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return config_from_dict(data, base_dir=str(Path(path).resolve().parent))


@dataclass
class LoadedModels:
    imv: dict = field(default_factory=dict)
    mve: dict = field(default_factory=dict)
    ica: Optional[ModelDocument] = None


def _load(cfg: Config, path: str, what: str) -> ModelDocument:
    p = cfg.resolve(path)
    if not p.exists():
        raise ConfigError(f"{what}: model file {p} does not exist")
    try:
        return load_model(p)
    except ModelError as exc:
        raise ConfigError(f"{what}: {p}: {exc}") from exc
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{what}: cannot load {p}: {exc}") from exc


def _check_schema(doc: ModelDocument, features, classes, what: str) -> None:
    tree = doc.tree
    if tuple(tree.features) != tuple(features):
        raise ConfigError(f"{what}: model features {list(tree.features)} do not match "
                          f"the expected {list(features)}")
    if tuple(tree.classes) != tuple(classes):
        raise ConfigError(f"{what}: model classes {list(tree.classes)} do not match "
                          f"the expected {list(classes)}")


def load_models(cfg: Config) -> LoadedModels:
    """Load and schema-check every configured model before the society starts."""
    out = LoadedModels()
    for req in cfg.required_models:
        if req == "ica":
            if cfg.ica_model is None:
                raise ConfigError("required model ica is not configured")
            continue
        ch, _, role = req.partition("/")
        if ch not in CHANNELS or role not in MODEL_ROLES:
            raise ConfigError(f"required_models: bad entry {req!r}")
        if cfg.models.get(ch, {}).get(role) is None:
            raise ConfigError(f"required model {req} is not configured")
    for ch in CHANNELS:
        roles = cfg.models.get(ch, {})
        if roles.get("imv"):
            doc = _load(cfg, roles["imv"], f"{ch}/imv")
            _check_schema(doc, validation_feature_names(ch), TAGS, f"{ch}/imv")
            out.imv[ch] = doc
        if roles.get("mve"):
            doc = _load(cfg, roles["mve"], f"{ch}/mve")
            _check_schema(doc, estimation_feature_names(ch), LEVELS, f"{ch}/mve")
            out.mve[ch] = doc
    if cfg.ica_model:
        doc = _load(cfg, cfg.ica_model, "ica")
        _check_schema(doc, CHANNELS, ALARM_CLASSES, "ica")
        out.ica = doc
    return out
