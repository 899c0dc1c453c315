"""C4.5-style decision trees over numeric features.

Splits are binary threshold tests (``x <= t`` goes left) at midpoints between
consecutive distinct values, chosen by gain ratio under the mean-gain guard.
Absent values (NaN) follow the C4.5 fractional-weight convention both when
growing and when predicting.  Pruning replaces subtrees by leaves using the
binomial upper confidence limit on the leaf error rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import betaincinv

from .. import kernels
from .._pykernels import _accumulate
from .dataset import Dataset

TIE_EPS = 1e-12


class InductionError(ValueError):
    pass


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Split statistics


def entropy(counts: Sequence[float]) -> float:
    """Shannon entropy in bits of a class-count vector."""
    total = 0.0
    for c in counts:
        if c < 0:
            raise ValueError("negative class count")
        total += c
    if total == 0:
        raise ValueError("empty set")
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / total
            h -= p * math.log2(p)
    return h


@dataclass(frozen=True)
class SplitCandidate:
    feature: str
    threshold: float
    gain: float
    split_info: float
    usable: bool = True

    @property
    def ratio(self) -> Optional[float]:
        if self.split_info <= 0.0:
            return None
        return self.gain / self.split_info


def gain_ratio(dataset: Dataset, feature: str, threshold: float,
               min_leaf: float = 0.0) -> SplitCandidate:
    """Score a single ``feature <= threshold`` split over the whole dataset.

    Rows where the feature is absent are left out of the class statistics and
    the gain is scaled by the known fraction of the total weight.
    """
    j = dataset.feature_index(feature)
    col = dataset.X[:, j]
    w = dataset.w
    y = dataset.y
    k = len(dataset.classes)
    known = ~np.isnan(col)
    left = known & (col <= threshold)
    right = known & (col > threshold)
    total_w = float(w.sum())
    kw = float(w[known].sum())
    lw = float(w[left].sum())
    rw = float(w[right].sum())
    if lw <= 0.0 or rw <= 0.0:
        return SplitCandidate(feature, threshold, 0.0, 0.0, usable=False)
    cnt = lambda m: np.bincount(y[m], weights=w[m], minlength=k).tolist()
    gain = (kw / total_w) * (entropy(cnt(known)) - (lw / kw) * entropy(cnt(left))
                             - (rw / kw) * entropy(cnt(right)))
    si = entropy([lw, rw])
    return SplitCandidate(feature, threshold, max(gain, 0.0), si,
                          usable=lw >= min_leaf and rw >= min_leaf and si > 0.0)


def _scan_node(X, y, w, n_classes, min_leaf):
    """All split candidates at a node, features in order, thresholds ascending."""
    total_w = float(w.sum())
    parts = []
    for j in range(X.shape[1]):
        col = X[:, j]
        known = ~np.isnan(col)
        vals = col[known]
        order = np.argsort(vals, kind="stable")
        t, g, s, u = kernels.scan_feature(
            np.ascontiguousarray(vals[order]),
            np.ascontiguousarray(y[known][order], dtype=np.int64),
            np.ascontiguousarray(w[known][order]),
            n_classes, total_w, float(min_leaf),
        )
        parts.append((j, t, g, s, u))
    return parts


def _select(parts):
    """Apply the mean-gain guard and gain-ratio maximum with canonical tie-breaks."""
    usable_gains = [g[u] for _, _, g, _, u in parts if len(g)]
    n_usable = sum(len(x) for x in usable_gains)
    if n_usable == 0:
        return None
    mean = sum(float(x.sum()) for x in usable_gains) / n_usable
    best_ratio = -1.0
    ranked = []
    for j, t, g, s, u in parts:
        if not len(g):
            continue
        elig = u & (g >= mean - TIE_EPS)
        if not elig.any():
            continue
        idx = np.flatnonzero(elig)
        r = g[idx] / s[idx]
        ranked.append((j, t[idx], g[idx], s[idx], r))
        best_ratio = max(best_ratio, float(r.max()))
    for j, t, g, s, r in ranked:
        hit = np.flatnonzero(r >= best_ratio - TIE_EPS)
        if len(hit):
            i = hit[0]
            return j, float(t[i]), float(g[i]), float(s[i])
    return None


def best_split(dataset: Dataset, min_leaf: float = 2) -> Optional[SplitCandidate]:
    """Best usable split of the dataset, or None when no split is usable."""
    parts = _scan_node(dataset.X, dataset.y, dataset.w, len(dataset.classes), min_leaf)
    chosen = _select(parts)
    if chosen is None:
        return None
    j, t, g, s = chosen
    return SplitCandidate(dataset.features[j], t, g, s, True)


# ---------------------------------------------------------------------------
# Tree structure


@dataclass(frozen=True)
class Leaf:
    cls: int
    counts: tuple

    @property
    def support(self) -> float:
        return float(sum(self.counts))


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, Split]


def _majority(counts) -> int:
    best = 0
    for k in range(1, len(counts)):
        if counts[k] > counts[best]:
            best = k
    return best


def make_leaf(counts) -> Leaf:
    counts = tuple(float(c) for c in counts)
    return Leaf(_majority(counts), counts)


@dataclass(frozen=True)
class FlatTree:
    feat: np.ndarray
    thr: np.ndarray
    left: np.ndarray
    right: np.ndarray
    frac_left: np.ndarray
    leaf_class: np.ndarray
    probs: np.ndarray


class DecisionTree:
    """Immutable binary decision tree with per-leaf training support."""

    def __init__(self, features: Sequence[str], classes: Sequence[str], root: Node,
                 class_name: str = "class"):
        self.features = tuple(features)
        self.classes = tuple(classes)
        self.class_name = class_name
        self.root = root
        self._index = {f: i for i, f in enumerate(self.features)}
        for node in self.nodes():
            if isinstance(node, Leaf) and len(node.counts) != len(self.classes):
                raise SchemaError("leaf support does not match class list")
            if isinstance(node, Split) and not 0 <= node.feature < len(self.features):
                raise SchemaError(f"split on unknown feature index {node.feature}")

    def nodes(self):
        """Yield nodes in preorder (node, left subtree, right subtree)."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, Split):
                stack.append(node.right)
                stack.append(node.left)

    def leaves(self) -> list[Leaf]:
        return [n for n in self.nodes() if isinstance(n, Leaf)]

    @property
    def n_leaves(self) -> int:
        return sum(1 for n in self.nodes() if isinstance(n, Leaf))

    @property
    def depth(self) -> int:
        def d(n):
            return 0 if isinstance(n, Leaf) else 1 + max(d(n.left), d(n.right))
        return d(self.root)

    @cached_property
    def flat(self) -> FlatTree:
        nodes = list(self.nodes())
        pos = {id(n): i for i, n in enumerate(nodes)}
        m, k = len(nodes), len(self.classes)
        feat = np.full(m, -1, dtype=np.int64)
        thr = np.zeros(m)
        left = np.full(m, -1, dtype=np.int64)
        right = np.full(m, -1, dtype=np.int64)
        frac = np.zeros(m)
        leaf_class = np.zeros(m, dtype=np.int64)
        probs = np.zeros((m, k))
        support = np.zeros(m)
        for i in range(m - 1, -1, -1):
            n = nodes[i]
            if isinstance(n, Leaf):
                s = n.support
                support[i] = s
                leaf_class[i] = n.cls
                probs[i] = [c / s for c in n.counts] if s > 0 else [1.0 / k] * k
            else:
                li, ri = pos[id(n.left)], pos[id(n.right)]
                feat[i], thr[i], left[i], right[i] = n.feature, n.threshold, li, ri
                support[i] = support[li] + support[ri]
                frac[i] = support[li] / support[i] if support[i] > 0 else 0.5
        return FlatTree(feat, thr, left, right, frac, leaf_class, probs)

    def _vector(self, features) -> list:
        if isinstance(features, Mapping):
            if set(features) != set(self.features):
                missing = sorted(set(self.features) - set(features))
                extra = sorted(set(features) - set(self.features))
                raise SchemaError(f"feature schema mismatch (missing {missing}, unexpected {extra})")
            vec = [features[f] for f in self.features]
        else:
            vec = list(features)
            if len(vec) != len(self.features):
                raise SchemaError(f"expected {len(self.features)} features, got {len(vec)}")
        return [math.nan if v is None else float(v) for v in vec]

    def predict(self, features) -> tuple[str, tuple]:
        """Classify one input; absent features (None/NaN) split the descent."""
        x = self._vector(features)
        node = self.root
        while isinstance(node, Split):
            v = x[node.feature]
            if v != v:
                break
            node = node.left if v <= node.threshold else node.right
        else:
            s = node.support
            k = len(self.classes)
            dist = tuple(c / s for c in node.counts) if s > 0 else (1.0 / k,) * k
            return self.classes[node.cls], dist
        ft = self.flat
        acc = [0.0] * len(self.classes)
        _accumulate(0, x, 1.0, ft.feat.tolist(), ft.thr.tolist(), ft.left.tolist(),
                    ft.right.tolist(), ft.frac_left.tolist(), ft.probs.tolist(), acc)
        return self.classes[_majority(acc)], tuple(acc)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        """Class indices for each row of a (n, n_features) array, NaN = absent."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise SchemaError("input array does not match the feature schema")
        ft = self.flat
        cls, _ = kernels.predict_batch(X, ft.feat, ft.thr, ft.left, ft.right,
                                       ft.frac_left, ft.leaf_class, ft.probs)
        return cls

    def __repr__(self):
        return f"DecisionTree(features={self.features}, leaves={self.n_leaves})"


def predict(tree: DecisionTree, features) -> tuple[str, tuple]:
    return tree.predict(features)


# ---------------------------------------------------------------------------
# Growing


def grow_tree(dataset: Dataset, min_leaf: float = 2, max_depth: int = 25) -> DecisionTree:
    """Recursive partitioning until nodes are pure, unsplittable or too deep."""
    if dataset.n_rows == 0:
        raise InductionError("cannot grow a tree from an empty dataset")
    if np.any(dataset.y < 0):
        raise InductionError("training rows must be labeled")
    X, y, k = dataset.X, dataset.y, len(dataset.classes)

    def build(idx: np.ndarray, w: np.ndarray, depth: int) -> Node:
        counts = np.bincount(y[idx], weights=w, minlength=k)
        if np.count_nonzero(counts > 0) <= 1 or depth >= max_depth:
            return make_leaf(counts)
        chosen = _select(_scan_node(X[idx], y[idx], w, k, min_leaf))
        if chosen is None:
            return make_leaf(counts)
        j, thr, _, _ = chosen
        col = X[idx, j]
        known = ~np.isnan(col)
        go_left = known & (col <= thr)
        go_right = known & (col > thr)
        missing = ~known
        lw = float(w[go_left].sum())
        rw = float(w[go_right].sum())
        kw = lw + rw
        if missing.any():
            l_idx = np.concatenate([idx[go_left], idx[missing]])
            l_w = np.concatenate([w[go_left], w[missing] * (lw / kw)])
            r_idx = np.concatenate([idx[go_right], idx[missing]])
            r_w = np.concatenate([w[go_right], w[missing] * (rw / kw)])
        else:
            l_idx, l_w = idx[go_left], w[go_left]
            r_idx, r_w = idx[go_right], w[go_right]
        return Split(j, thr, build(l_idx, l_w, depth + 1), build(r_idx, r_w, depth + 1))

    root = build(np.arange(dataset.n_rows), dataset.w.copy(), 0)
    return DecisionTree(dataset.features, dataset.classes, root, dataset.class_name)


# ---------------------------------------------------------------------------
# Pruning


def upper_error_rate(errors: float, n: float, confidence: float = 0.25) -> float:
    """Binomial upper confidence limit on the error rate of ``errors`` out of ``n``.

    The returned ``p`` satisfies ``P(X <= errors; n, p) == confidence``.
    """
    if n <= 0:
        return 0.0
    if errors >= n - 1e-12:
        return 1.0
    return float(betaincinv(errors + 1.0, n - errors, 1.0 - confidence))


def pessimistic_errors(counts, confidence: float = 0.25) -> float:
    n = float(sum(counts))
    if n <= 0:
        return 0.0
    e = n - max(counts)
    return n * upper_error_rate(e, n, confidence)


def _sum_counts(node: Node) -> np.ndarray:
    if isinstance(node, Leaf):
        return np.asarray(node.counts, dtype=float)
    return _sum_counts(node.left) + _sum_counts(node.right)


def prune(tree: DecisionTree, confidence: float = 0.25) -> DecisionTree:
    """Bottom-up subtree replacement; a subtree collapses when its leaf estimate
    is no worse than the sum of its (already pruned) children's estimates."""
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")

    def walk(node: Node) -> tuple[Node, float]:
        if isinstance(node, Leaf):
            return node, pessimistic_errors(node.counts, confidence)
        left, el = walk(node.left)
        right, er = walk(node.right)
        counts = _sum_counts(node)
        as_leaf = pessimistic_errors(counts.tolist(), confidence)
        if as_leaf <= el + er:
            return make_leaf(counts), as_leaf
        return Split(node.feature, node.threshold, left, right), el + er

    root, _ = walk(tree.root)
    return DecisionTree(tree.features, tree.classes, root, tree.class_name)


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class Evaluation:
    classes: tuple
    confusion: np.ndarray  # rows: actual, columns: predicted

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.confusion))

    @property
    def accuracy(self) -> float:
        return self.correct / self.total

    def report(self) -> str:
        width = max(9, *(len(c) + 2 for c in self.classes))
        head = "actual\\pred".ljust(12) + "".join(c.rjust(width) for c in self.classes)
        lines = [head]
        for i, c in enumerate(self.classes):
            lines.append(c.ljust(12) + "".join(str(int(v)).rjust(width) for v in self.confusion[i]))
        lines.append(f"accuracy={self.accuracy:.4f}")
        return "\n".join(lines)


def evaluate(tree: DecisionTree, dataset: Dataset) -> Evaluation:
    if dataset.n_rows == 0:
        raise InductionError("empty test set")
    if tuple(dataset.features) != tree.features:
        raise SchemaError("test dataset features do not match the tree")
    if tuple(dataset.classes) != tree.classes:
        raise SchemaError("test dataset classes do not match the tree")
    pred = tree.predict_batch(dataset.X)
    k = len(tree.classes)
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (dataset.y, pred), 1)
    return Evaluation(tree.classes, conf)
