"""Pure-Python versions of the hot loops in ``_kernels.pyx``.

Both modules must produce bit-identical results: same accumulation order,
same libm calls.  Keep them in lockstep.
"""

from math import isnan, log2

import numpy as np

BACKEND = "python"


def entropy_from(counts, total):
    h = 0.0
    for c in counts:
        if c > 0.0:
            p = c / total
            h -= p * log2(p)
    return h


def midpoint(a, b):
    m = (a + b) / 2.0
    if m >= b:  # adjacent floats
        m = a
    return m


def scan_feature(values, classes, weights, n_classes, total_weight, min_leaf):
    """Score every midpoint split of one feature.

    ``values`` must be sorted ascending with matching ``classes``/``weights``;
    rows where the feature is absent are excluded by the caller and only
    enter through ``total_weight``.

    Returns arrays (thresholds, gains, split_infos, usable).
    """
    vals = values.tolist()
    cls = classes.tolist()
    ws = weights.tolist()
    n = len(vals)
    known = [0.0] * n_classes
    kw = 0.0
    for i in range(n):
        known[cls[i]] += ws[i]
        kw += ws[i]
    thresholds, gains, infos, usable = [], [], [], []
    if n < 2 or kw <= 0.0:
        return (np.array(thresholds, dtype=np.float64), np.array(gains, dtype=np.float64),
                np.array(infos, dtype=np.float64), np.array(usable, dtype=bool))
    h_known = entropy_from(known, kw)
    frac = kw / total_weight
    left = [0.0] * n_classes
    right = [0.0] * n_classes
    lw = 0.0
    for i in range(n - 1):
        left[cls[i]] += ws[i]
        lw += ws[i]
        if vals[i] == vals[i + 1]:
            continue
        rw = kw - lw
        for k in range(n_classes):
            right[k] = known[k] - left[k]
        h_l = entropy_from(left, lw)
        h_r = entropy_from(right, rw)
        gain = frac * (h_known - (lw / kw) * h_l - (rw / kw) * h_r)
        if gain < 0.0:
            gain = 0.0
        si = entropy_from((lw, rw), kw)
        thresholds.append(midpoint(vals[i], vals[i + 1]))
        gains.append(gain)
        infos.append(si)
        usable.append(lw >= min_leaf and rw >= min_leaf and si > 0.0)
    return (np.array(thresholds, dtype=np.float64), np.array(gains, dtype=np.float64),
            np.array(infos, dtype=np.float64), np.array(usable, dtype=bool))


def window_minmax(values, width):
    """max - min over each trailing window of ``width`` samples.

    NaN entries are ignored; windows with fewer than two defined values give NaN.
    """
    vals = values.tolist()
    n = len(vals)
    out = [float("nan")] * n
    for i in range(n):
        lo = float("inf")
        hi = float("-inf")
        m = 0
        for j in range(max(0, i - width + 1), i + 1):
            v = vals[j]
            if v == v:
                m += 1
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
        if m >= 2:
            out[i] = hi - lo
    return np.array(out, dtype=np.float64)


def _accumulate(node, x, w, feat, thr, left, right, frac_left, probs, acc):
    f = feat[node]
    if f < 0:
        row = probs[node]
        for k in range(len(acc)):
            acc[k] += w * row[k]
        return
    v = x[f]
    if isnan(v):
        fl = frac_left[node]
        _accumulate(left[node], x, w * fl, feat, thr, left, right, frac_left, probs, acc)
        _accumulate(right[node], x, w * (1.0 - fl), feat, thr, left, right, frac_left, probs, acc)
    elif v <= thr[node]:
        _accumulate(left[node], x, w, feat, thr, left, right, frac_left, probs, acc)
    else:
        _accumulate(right[node], x, w, feat, thr, left, right, frac_left, probs, acc)


def predict_batch(X, feat, thr, left, right, frac_left, leaf_class, probs):
    """Classify each row of ``X`` against a flattened tree.

    Returns (class indices, class distributions).  Fully-defined rows take the
    reached leaf's class; rows with absent (NaN) features combine leaf
    distributions weighted by training support.
    """
    n, _ = X.shape
    n_classes = probs.shape[1]
    feat_l = feat.tolist()
    thr_l = thr.tolist()
    left_l = left.tolist()
    right_l = right.tolist()
    fl_l = frac_left.tolist()
    lc = leaf_class.tolist()
    probs_l = probs.tolist()
    rows = X.tolist()
    out_cls = np.empty(n, dtype=np.int64)
    out_p = np.zeros((n, n_classes), dtype=np.float64)
    for r in range(n):
        x = rows[r]
        node = 0
        missing = False
        while feat_l[node] >= 0:
            v = x[feat_l[node]]
            if v != v:
                missing = True
                break
            node = left_l[node] if v <= thr_l[node] else right_l[node]
        if not missing:
            out_cls[r] = lc[node]
            out_p[r] = probs_l[node]
            continue
        acc = [0.0] * n_classes
        _accumulate(0, x, 1.0, feat_l, thr_l, left_l, right_l, fl_l, probs_l, acc)
        best = 0
        for k in range(1, n_classes):
            if acc[k] > acc[best]:
                best = k
        out_cls[r] = best
        out_p[r] = acc
    return out_cls, out_p
