"""Portable model documents, tree-to-rule compilation and the threshold engine.

A ruleset compiled from a tree holds one ``IF <conditions> THEN <class>``
rule per leaf.  Model documents are JSON (``*.aqmodel.json``) with shortest
round-trip float formatting, so thresholds survive export/import exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .core import CHANNELS, FORMAL, UNITS, VALID, Alarm, MeasurementTuple, to_iso
from .induction.tree import DecisionTree, Leaf, Split

SCHEMA_VERSION = 1
ROLES = ("IMV", "MVE", "ICA")
MODEL_SUFFIX = ".aqmodel.json"


class ModelError(ValueError):
    """Malformed or unsupported model document; ``path`` locates the problem."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class RuleConsistencyError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Rules


@dataclass(frozen=True)
class Condition:
    feature: str
    op: str  # "<=" or ">"
    threshold: float

    def holds(self, value: float) -> bool:
        return value <= self.threshold if self.op == "<=" else value > self.threshold

    def __str__(self):
        return f"{self.feature} {self.op} {self.threshold!r}"


@dataclass(frozen=True)
class Rule:
    id: str
    conditions: tuple
    consequence: str
    support: tuple

    def __str__(self):
        body = " AND ".join(str(c) for c in self.conditions) or "TRUE"
        return f"{self.id}: IF {body} THEN {self.consequence}"


class RuleSet:
    def __init__(self, features: Sequence[str], classes: Sequence[str], rules: Sequence[Rule]):
        self.features = tuple(features)
        self.classes = tuple(classes)
        self.rules = tuple(rules)
        pos = {f: i for i, f in enumerate(self.features)}
        self._compiled = [
            (tuple((pos[c.feature], c.op == "<=", c.threshold) for c in r.conditions), r.consequence)
            for r in self.rules
        ]

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def text(self) -> str:
        return "\n".join(str(r) for r in self.rules)


def _simplify(path: list) -> tuple:
    """Keep the tightest bound per (feature, op); order by first appearance."""
    best: dict = {}
    order: list = []
    for c in path:
        key = (c.feature, c.op)
        if key not in best:
            order.append(key)
            best[key] = c
        elif (c.op == "<=" and c.threshold < best[key].threshold) or \
                (c.op == ">" and c.threshold > best[key].threshold):
            best[key] = c
    return tuple(best[k] for k in order)


def compile_rules(tree: DecisionTree) -> RuleSet:
    """One rule per leaf, in leaf preorder."""
    rules = []

    def walk(node, path):
        if isinstance(node, Leaf):
            rules.append(Rule(f"r{len(rules) + 1}", _simplify(path),
                              tree.classes[node.cls], node.counts))
            return
        f = tree.features[node.feature]
        walk(node.left, path + [Condition(f, "<=", node.threshold)])
        walk(node.right, path + [Condition(f, ">", node.threshold)])

    walk(tree.root, [])
    return RuleSet(tree.features, tree.classes, rules)


def eval_rules(ruleset: RuleSet, features) -> str:
    """Consequence of the single rule matching a fully-defined input."""
    if isinstance(features, Mapping):
        x = [features[f] for f in ruleset.features]
    else:
        x = list(features)
    if len(x) != len(ruleset.features):
        raise ValueError("feature vector does not match the ruleset schema")
    for v in x:
        if v is None or v != v:
            raise ValueError("eval_rules needs fully-defined features")
    hit = None
    for conds, cls in ruleset._compiled:
        for i, le, t in conds:
            if (x[i] > t) if le else (x[i] <= t):
                break
        else:
            if hit is not None:
                raise RuleConsistencyError("more than one rule matches")
            hit = cls
    if hit is None:
        raise RuleConsistencyError("no rule matches")
    return hit


def _box(rule: Rule, features) -> dict:
    box = {f: (-math.inf, math.inf) for f in features}
    for c in rule.conditions:
        lo, hi = box[c.feature]
        box[c.feature] = (lo, min(hi, c.threshold)) if c.op == "<=" else (max(lo, c.threshold), hi)
    return box


def _intersects(a: dict, b: dict) -> bool:
    # intervals are (lo, hi]
    return all(max(a[f][0], b[f][0]) < min(a[f][1], b[f][1]) for f in a)


def _contains(outer: dict, inner: dict) -> bool:
    return all(outer[f][0] <= inner[f][0] and inner[f][1] <= outer[f][1] for f in inner)


def check_ruleset(ruleset: RuleSet) -> None:
    """Interval analysis: rules must be pairwise exclusive and jointly exhaustive.

    Raises RuleConsistencyError otherwise.
    """
    boxes = [_box(r, ruleset.features) for r in ruleset.rules]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if _intersects(boxes[i], boxes[j]):
                raise RuleConsistencyError(
                    f"rules {ruleset.rules[i].id} and {ruleset.rules[j].id} overlap")

    def covered(region: dict) -> bool:
        for b in boxes:
            if _contains(b, region):
                return True
        for b in boxes:
            if not _intersects(b, region):
                continue
            for f, (lo, hi) in region.items():
                for cut in (b[f][0], b[f][1]):
                    if lo < cut < hi:
                        below = dict(region)
                        below[f] = (lo, cut)
                        above = dict(region)
                        above[f] = (cut, hi)
                        return covered(below) and covered(above)
            return True  # unreachable: such a box contains the region
        return False

    start = {f: (-math.inf, math.inf) for f in ruleset.features}
    if not covered(start):
        raise RuleConsistencyError("rules leave part of the input space uncovered")


# ---------------------------------------------------------------------------
# Model documents


@dataclass
class ModelDocument:
    tree: DecisionTree
    role: str
    model_id: str
    provenance: dict = field(default_factory=dict)
    channel: Optional[str] = None

    @property
    def ruleset(self) -> RuleSet:
        return compile_rules(self.tree)


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def tree_to_nodes(tree: DecisionTree) -> list:
    nodes = list(tree.nodes())
    pos = {id(n): i for i, n in enumerate(nodes)}
    out = []
    for n in nodes:
        if isinstance(n, Leaf):
            out.append({"leaf": tree.classes[n.cls], "support": list(n.counts)})
        else:
            out.append({"feature": tree.features[n.feature], "threshold": n.threshold,
                        "left": pos[id(n.left)], "right": pos[id(n.right)]})
    return out


def export_model(tree: DecisionTree, role: str, provenance: Optional[dict] = None,
                 model_id: Optional[str] = None, channel: Optional[str] = None) -> bytes:
    if role not in ROLES:
        raise ValueError(f"unknown engine role {role!r}")
    nodes = tree_to_nodes(tree)
    if model_id is None:
        model_id = f"{role.lower()}-{config_hash(nodes)}"
    doc = {
        "v": SCHEMA_VERSION,
        "model_id": model_id,
        "role": role,
        "channel": channel,
        "class_name": tree.class_name,
        "features": list(tree.features),
        "classes": list(tree.classes),
        "nodes": nodes,
        "provenance": provenance or {},
    }
    return (json.dumps(doc, indent=1, allow_nan=False) + "\n").encode("utf-8")


def _expect(cond: bool, message: str, path: str) -> None:
    if not cond:
        raise ModelError(message, path)


def import_model(data) -> ModelDocument:
    """Parse and validate a model document (bytes, str or dict)."""
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ModelError(f"not valid JSON ({exc})") from None
    _expect(isinstance(data, dict), "document must be a JSON object", "$")
    _expect("v" in data, "missing schema version", "v")
    _expect(data["v"] == SCHEMA_VERSION, f"unsupported model version {data['v']!r}", "v")
    for key in ("model_id", "role", "features", "classes", "nodes"):
        _expect(key in data, "required field missing", key)
    _expect(data["role"] in ROLES, f"unknown role {data['role']!r}", "role")
    features, classes = data["features"], data["classes"]
    _expect(isinstance(features, list) and all(isinstance(f, str) for f in features)
            and len(set(features)) == len(features), "must be a list of distinct names", "features")
    _expect(isinstance(classes, list) and len(classes) >= 1
            and all(isinstance(c, str) for c in classes), "must be a list of names", "classes")
    raw = data["nodes"]
    _expect(isinstance(raw, list) and raw, "must be a non-empty list", "nodes")
    fidx = {f: i for i, f in enumerate(features)}
    cidx = {c: i for i, c in enumerate(classes)}
    seen = set()

    def build(i: int, path: str):
        _expect(isinstance(i, int) and 0 <= i < len(raw), f"child index {i!r} out of range", path)
        _expect(i not in seen, "node referenced twice", f"nodes[{i}]")
        seen.add(i)
        node = raw[i]
        here = f"nodes[{i}]"
        _expect(isinstance(node, dict), "node must be an object", here)
        if "leaf" in node:
            _expect(node["leaf"] in cidx, f"unknown class {node.get('leaf')!r}", f"{here}.leaf")
            _expect("support" in node, "leaf is missing support counts", f"{here}.support")
            sup = node["support"]
            _expect(isinstance(sup, list) and len(sup) == len(classes)
                    and all(isinstance(s, (int, float)) and not isinstance(s, bool) and s >= 0
                            for s in sup),
                    "support must list one non-negative count per class", f"{here}.support")
            counts = tuple(float(s) for s in sup)
            cls = cidx[node["leaf"]]
            _expect(sum(counts) == 0 or counts[cls] == max(counts),
                    "leaf class is not a majority of its support", f"{here}.leaf")
            return Leaf(cls, counts)
        for key in ("feature", "threshold", "left", "right"):
            _expect(key in node, "split node field missing", f"{here}.{key}")
        _expect(node["feature"] in fidx, f"unknown feature {node['feature']!r}", f"{here}.feature")
        thr = node["threshold"]
        _expect(isinstance(thr, (int, float)) and not isinstance(thr, bool) and math.isfinite(thr),
                "threshold must be a finite number", f"{here}.threshold")
        for key in ("left", "right"):
            _expect(isinstance(node[key], int) and node[key] > i,
                    "children must follow their parent", f"{here}.{key}")
        return Split(fidx[node["feature"]], float(thr),
                     build(node["left"], f"{here}.left"), build(node["right"], f"{here}.right"))

    root = build(0, "nodes")
    _expect(len(seen) == len(raw), "unreachable nodes present", "nodes")
    tree = DecisionTree(features, classes, root, data.get("class_name") or "class")
    return ModelDocument(tree, data["role"], str(data["model_id"]),
                         dict(data.get("provenance") or {}), data.get("channel"))


def save_model(path, tree: DecisionTree, role: str, provenance=None, model_id=None,
               channel=None) -> None:
    with open(path, "wb") as fh:
        fh.write(export_model(tree, role, provenance, model_id, channel))


def load_model(path) -> ModelDocument:
    with open(path, "rb") as fh:
        return import_model(fh.read())


# ---------------------------------------------------------------------------
# Formal alarm thresholds


@dataclass(frozen=True)
class ThresholdRule:
    id: str
    channel: str
    threshold: float
    severity: str = "info"
    units: str = ""
    message: str = "{channel} at {value} {units} reached the {threshold} {units} threshold"

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdRule":
        kw = dict(d)
        kw["threshold"] = float(kw["threshold"])
        kw.setdefault("units", UNITS.get(kw.get("channel"), ""))
        return cls(**kw)


DEFAULT_THRESHOLDS = (
    ThresholdRule("O3-info", "O3", 180.0, "info", "ug/m3"),
    ThresholdRule("O3-alert", "O3", 240.0, "alert", "ug/m3"),
)


def fat_evaluate(thresholds: Iterable[ThresholdRule], tup: MeasurementTuple) -> list[Alarm]:
    """Formal alarms for valid entries at or above their configured threshold."""
    by_channel: dict = {}
    for rule in thresholds:
        by_channel.setdefault(rule.channel, []).append(rule)
    alarms = []
    for ch in CHANNELS:
        rules = by_channel.get(ch)
        if not rules:
            continue
        entry = tup[ch]
        if entry.tag != VALID or entry.estimated or entry.value is None:
            continue
        for rule in rules:
            if entry.value >= rule.threshold:
                text = rule.message.format(channel=ch, value=entry.value, units=rule.units,
                                           threshold=rule.threshold, at=to_iso(tup.at))
                alarms.append(Alarm(FORMAL, tup.at, ch, rule.id, rule.severity, text))
    return alarms
