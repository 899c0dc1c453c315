import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from aqpipe.core import INVALID, VALID
from aqpipe.induction import (
    Dataset,
    InductionError,
    SchemaError,
    best_split,
    build_estimation_dataset,
    build_validation_dataset,
    entropy,
    evaluate,
    gain_ratio,
    grow_tree,
    predict,
    prune,
    validation_dataset_from_records,
)
from aqpipe.induction.tree import DecisionTree, Leaf, Split, pessimistic_errors, upper_error_rate


def ds(X, y, features=None, classes=("A", "B")):
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    features = features or tuple("abcdefgh"[: X.shape[1]])
    return Dataset(features, X, y, classes)


# -- entropy / gain ---------------------------------------------------------


def test_entropy_examples():
    assert entropy([4, 4]) == 1.0
    assert entropy([8, 0]) == 0.0
    assert abs(entropy([9, 5]) - 0.940286) < 1e-6
    with pytest.raises(ValueError, match="empty set"):
        entropy([0, 0])


@given(st.integers(1, 1000), st.integers(0, 1000))
def test_entropy_binary_bounds(a, b):
    h = entropy([a, b])
    assert 0.0 <= h <= 1.0
    assert (abs(h - 1.0) < 1e-12) == (a == b)
    if b == 0:
        assert h == 0.0


def test_gain_ratio_perfect_pair():
    c = gain_ratio(ds([[1.0], [2.0]], [0, 1]), "a", 1.5)
    assert c.gain == pytest.approx(1.0) and c.split_info == pytest.approx(1.0)
    assert c.ratio == pytest.approx(1.0)


def test_gain_ratio_constant_feature_unusable():
    c = gain_ratio(ds([[3.0]] * 4, [0, 1, 0, 1]), "a", 3.0)
    assert c.gain == 0.0 and not c.usable and c.ratio is None


def test_gain_ratio_three_valued_set_matches_oracle():
    # 14 rows, class counts {9, 5}, both cut points
    x = [1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3]
    y = [1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1]
    X = [[float(v)] for v in x]
    for t in (1.5, 2.5):
        got = gain_ratio(ds(X, y), "a", t)
        g, s, _ = oracles.candidate(X, y, 0, t, 2, 0)
        assert got.gain == pytest.approx(g, abs=1e-12)
        assert got.ratio == pytest.approx(g / s, abs=1e-12)


def test_gain_scaled_by_known_fraction():
    X = [[1.0], [2.0], [math.nan], [math.nan]]
    y = [0, 1, 0, 1]
    c = gain_ratio(ds(X, y), "a", 1.5)
    assert c.gain == pytest.approx(0.5)
    assert c.gain == pytest.approx(oracles.candidate(X, y, 0, 1.5, 2, 0)[0])


# -- best split -------------------------------------------------------------


def test_best_split_single_cut():
    c = best_split(ds([[1], [2], [3], [7], [8], [9]], [0, 0, 0, 1, 1, 1]), min_leaf=1)
    assert c.feature == "a" and c.threshold == 5.0


def test_best_split_identical_features_prefer_first():
    X = [[v, v] for v in (1, 2, 3, 7, 8, 9)]
    c = best_split(ds(X, [0, 0, 0, 1, 1, 1]), min_leaf=1)
    assert c.feature == "a"


def test_best_split_none_when_min_leaf_unmet():
    assert best_split(ds([[1], [2], [3]], [0, 1, 0]), min_leaf=2) is None


rows_strategy = st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.one_of(st.integers(0, 4).map(float), st.just(math.nan)),
                      min_size=3, max_size=3), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n)))


@settings(max_examples=300, deadline=None)
@given(rows_strategy, st.sampled_from([1, 2, 3]))
def test_best_split_oracle_with_missing(data, min_leaf):
    X, y = data
    got = best_split(ds(X, y), min_leaf=min_leaf)
    want = oracles.best_split(X, y, 2, min_leaf=min_leaf)
    if want is None:
        assert got is None
    else:
        assert ("abc".index(got.feature), got.threshold) == want[:2]
        assert got.gain == pytest.approx(want[2], abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(rows_strategy)
def test_gains_bounded_by_parent_entropy(data):
    X, y = data
    assume(len(set(y)) > 1)
    d = ds(X, y)
    for j, name in enumerate(d.features):
        for t in oracles.midpoints([r[j] for r in X if not math.isnan(r[j])]):
            g = gain_ratio(d, name, t).gain
            assert -1e-9 <= g <= entropy([y.count(0), y.count(1)]) + 1e-9


# -- growing ----------------------------------------------------------------


def test_pure_input_single_leaf():
    t = grow_tree(ds([[1], [2], [3]], [0, 0, 0]))
    assert t.n_leaves == 1 and predict(t, {"a": 9})[0] == "A"


def test_stump_threshold_between_straddling_values():
    x = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
    t = grow_tree(ds([[v] for v in x], [int(v > 5) for v in x]), min_leaf=1)
    assert isinstance(t.root, Split) and t.root.threshold == 5.5 and t.n_leaves == 2


def test_empty_dataset_rejected():
    with pytest.raises(InductionError):
        grow_tree(Dataset(("a",), np.empty((0, 1)), [], ("A", "B")))


def test_majority_tie_goes_to_earlier_class():
    t = grow_tree(ds([[1], [1]], [1, 0]))
    assert t.n_leaves == 1 and t.classes[t.root.cls] == "A"


def _conflict_free(d):
    """Fully known rows whose feature vector never carries two labels."""
    keep = ~np.isnan(d.X).any(axis=1)
    labels = {}
    for i in np.flatnonzero(keep):
        labels.setdefault(tuple(d.X[i]), set()).add(int(d.y[i]))
    for i in np.flatnonzero(keep):
        keep[i] = len(labels[tuple(d.X[i])]) == 1
    return d.subset(keep)


@settings(max_examples=80, deadline=None)
@given(st.integers(5, 40).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.integers(0, 6).map(float), min_size=2, max_size=2),
             min_size=n, max_size=n),
    st.lists(st.integers(0, 2), min_size=n, max_size=n))))
def test_unpruned_tree_fits_conflict_free_data(data):
    X, y = data
    d = _conflict_free(Dataset(("a", "b"), X, y, ("p", "q", "r")))
    assume(d.n_rows > 0)
    t = grow_tree(d, min_leaf=1)
    for i in range(d.n_rows):
        assert predict(t, d.row(i))[0] == d.label(i)


def test_unpruned_imv_tree_fits_its_training_rows(synth16k):
    d = validation_dataset_from_records(synth16k[:4000], "O3")
    d = _conflict_free(d)
    t = grow_tree(d, min_leaf=1, max_depth=200)
    assert evaluate(t, d).accuracy == 1.0


# -- pruning ----------------------------------------------------------------


@pytest.mark.parametrize("e,n", [(0, 1), (0, 6), (1, 6), (2, 9), (5, 14), (3, 40)])
def test_upper_error_rate_matches_bisection(e, n):
    assert upper_error_rate(e, n, 0.25) == pytest.approx(oracles.upper_limit(e, n, 0.25),
                                                         abs=1e-9)


@pytest.mark.parametrize("left,right,collapses", [
    ([6, 0], [1, 0], True),
    ([20, 0], [0, 20], False),
    ([10, 0], [0, 1], None),
    ([3, 0], [0, 1], None),
    ([5, 2], [1, 4], None),
])
def test_single_split_collapse_rule(left, right, collapses):
    tree = DecisionTree(("a",), ("A", "B"),
                        Split(0, 5.0, Leaf(int(left[1] > left[0]), tuple(map(float, left))),
                              Leaf(int(right[1] > right[0]), tuple(map(float, right)))))
    parent = [a + b for a, b in zip(left, right)]
    want = oracles.pessimistic(parent) <= oracles.pessimistic(left) + oracles.pessimistic(right)
    if collapses is not None:
        assert want == collapses
    assert (prune(tree).n_leaves == 1) == want
    assert pessimistic_errors([float(c) for c in parent]) == pytest.approx(
        oracles.pessimistic(parent), abs=1e-9)


def _random_tree(seed, n=300):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3)).round(1)
    y = ((X[:, 0] + rng.normal(scale=0.8, size=n)) > 0).astype(int)
    return grow_tree(Dataset(("a", "b", "c"), X, y, ("A", "B")), min_leaf=1), X, y


@pytest.mark.parametrize("seed", range(5))
def test_prune_oracle_and_monotone_in_confidence(seed):
    tree, X, y = _random_tree(seed)

    def ref(node):
        if isinstance(node, Leaf):
            return 1, oracles.pessimistic(node.counts)
        nl, el = ref(node.left)
        nr, er = ref(node.right)
        counts = [a + b for a, b in zip(_counts(node.left), _counts(node.right))]
        if oracles.pessimistic(counts) <= el + er + 1e-9:
            return 1, oracles.pessimistic(counts)
        return nl + nr, el + er

    assert prune(tree, 0.25).n_leaves == ref(tree.root)[0]
    sizes = [prune(tree, cf).n_leaves for cf in (0.5, 0.25, 0.1, 0.01, 0.001)]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))
    assert sizes[0] <= tree.n_leaves
    d = Dataset(("a", "b", "c"), X, y, ("A", "B"))
    assert evaluate(prune(tree), d).accuracy <= evaluate(tree, d).accuracy


def _counts(node):
    if isinstance(node, Leaf):
        return list(node.counts)
    return [a + b for a, b in zip(_counts(node.left), _counts(node.right))]


def test_prune_single_leaf_unchanged():
    t = DecisionTree(("a",), ("A", "B"), Leaf(0, (4.0, 1.0)))
    assert prune(t).root == t.root


# -- predict ----------------------------------------------------------------


@pytest.fixture
def stump():
    return DecisionTree(("x",), ("lo", "hi"),
                        Split(0, 5.0, Leaf(0, (6.0, 2.0)), Leaf(1, (1.0, 3.0))))


def test_predict_boundaries(stump):
    assert predict(stump, {"x": 3})[0] == "lo"
    assert predict(stump, {"x": 5})[0] == "lo"
    assert predict(stump, {"x": 5.0000001})[0] == "hi"


def test_predict_absent_feature_weights_by_support(stump):
    cls, dist = predict(stump, {"x": None})
    # left carries 8 of 12 training rows: 8/12*(6/8, 2/8) + 4/12*(1/4, 3/4)
    assert dist == pytest.approx((7 / 12, 5 / 12))
    assert cls == "lo"
    assert stump.predict_batch(np.array([[np.nan]]))[0] == 0


def test_predict_schema_mismatch(stump):
    with pytest.raises(SchemaError):
        predict(stump, {"y": 1})
    with pytest.raises(SchemaError):
        predict(stump, [1, 2])


def test_predict_batch_matches_predict(synth16k):
    d = validation_dataset_from_records(synth16k[:3000], "O3")
    t = prune(grow_tree(d))
    X = d.X.copy()
    X[::7, 1] = np.nan
    X[::11, 3] = np.nan
    batch = t.predict_batch(X)
    single = [t.classes.index(t.predict(list(row))[0]) for row in X.tolist()]
    assert batch.tolist() == single


# -- evaluation -------------------------------------------------------------


def test_evaluate_constant_leaf():
    t = DecisionTree(("a",), (VALID, INVALID), Leaf(0, (9.0, 5.0)))
    d = Dataset(("a",), np.zeros((14, 1)), [0] * 9 + [1] * 5, (VALID, INVALID))
    ev = evaluate(t, d)
    assert ev.accuracy == pytest.approx(9 / 14)
    assert ev.confusion.tolist() == [[9, 0], [5, 0]]
    assert ev.report().splitlines()[-1] == "accuracy=0.6429"
    with pytest.raises(InductionError):
        evaluate(t, d.subset(np.zeros(14, dtype=bool)))


def test_year_split():
    at = np.array([946684800, 946684800 + 900, 978307200, 978307200 + 900])  # 2000, 2001
    d = Dataset(("a",), np.zeros((4, 1)), [0, 1, 0, 1], ("A", "B"), at=at)
    tr, te = d.split_year()
    assert tr.n_rows == 2 and te.n_rows == 2
    with pytest.raises(ValueError, match="split produces empty test set"):
        d.subset(np.array([True, True, False, False])).split_year()


# -- features ---------------------------------------------------------------


def test_ramp_features():
    d = build_validation_dataset([100.0 + 2 * i for i in range(11)], channel="O3")
    assert d.features == ("O3", "O3_30", "O3_90", "MinMax60", "MinMax150")
    assert d.row(d.n_rows - 1) == {"O3": 120.0, "O3_30": 116.0, "O3_90": 108.0,
                                   "MinMax60": 8.0, "MinMax150": 20.0}


def test_constant_series_has_zero_spread():
    d = build_validation_dataset([42.0] * 30)
    assert np.all(d.X[:, 3] == 0) and np.all(d.X[:, 4] == 0)


def test_short_series_is_empty(caplog):
    d = build_validation_dataset([1.0] * 10)
    assert d.n_rows == 0 and d.X.shape == (0, 5)
    assert "shorter" in caplog.text


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(0, 500).map(lambda v: round(v, 1))),
                min_size=11, max_size=60))
def test_validation_rows_match_window_oracle(values):
    d = build_validation_dataset(values)
    rows = [t for t in range(10, len(values)) if values[t] is not None]
    assert d.n_rows == len(rows)
    for i, t in enumerate(rows):
        r = d.row(i)
        assert r["O3"] == values[t]
        assert r["O3_30"] == values[t - 2] and r["O3_90"] == values[t - 6]
        assert r["MinMax60"] == oracles.window_spread(values, t, 5)
        assert r["MinMax150"] == oracles.window_spread(values, t, 11)
        if r["MinMax60"] is not None:
            assert r["MinMax150"] >= r["MinMax60"] >= 0


def test_estimation_labels_and_baseline(synth16k):
    d = build_estimation_dataset(synth16k, "O3")
    assert len(d.features) == 12 and d.features[-2:] == ("O3_lag1", "O3_lag2")
    tr, te = d.split_fraction(0.5)
    acc = evaluate(prune(grow_tree(tr)), te).accuracy
    baseline = max(np.bincount(te.y)) / te.n_rows
    assert acc >= baseline


def test_estimation_all_low_predicts_low(synth16k):
    d = build_estimation_dataset(synth16k[:2000], "O3")
    low = d.subset(d.y == 0)
    t = grow_tree(low)
    assert t.n_leaves == 1 and t.classes[t.root.cls] == "low"
