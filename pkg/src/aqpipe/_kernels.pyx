# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for split scanning, window features and batch predict.

Mirrors ``_pykernels`` operation for operation so both backends agree bit
for bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log2, isnan, INFINITY, NAN

cnp.import_array()

BACKEND = "cython"


cdef inline double _entropy(double* counts, Py_ssize_t k, double total) noexcept nogil:
    cdef double h = 0.0, p
    cdef Py_ssize_t i
    for i in range(k):
        if counts[i] > 0.0:
            p = counts[i] / total
            h -= p * log2(p)
    return h


def midpoint(double a, double b):
    cdef double m = (a + b) / 2.0
    if m >= b:
        m = a
    return m


def entropy_from(counts, double total):
    cdef double h = 0.0, p, c
    for c in counts:
        if c > 0.0:
            p = c / total
            h -= p * log2(p)
    return h


def scan_feature(const double[::1] values, const long[::1] classes,
                 const double[::1] weights, int n_classes,
                 double total_weight, double min_leaf):
    cdef Py_ssize_t n = values.shape[0], i, k, m = 0
    thresholds = np.empty(max(n - 1, 0), dtype=np.float64)
    gains = np.empty(max(n - 1, 0), dtype=np.float64)
    infos = np.empty(max(n - 1, 0), dtype=np.float64)
    usable = np.empty(max(n - 1, 0), dtype=np.bool_)
    cdef double[::1] t_v = thresholds
    cdef double[::1] g_v = gains
    cdef double[::1] s_v = infos
    cdef cnp.npy_bool[::1] u_v = usable
    cdef double[64] known
    cdef double[64] left
    cdef double[64] right
    cdef double[2] sides
    cdef double kw = 0.0, lw = 0.0, rw, h_known, frac, h_l, h_r, gain, si, mid
    if n_classes > 64:
        raise ValueError("at most 64 classes supported")
    for k in range(n_classes):
        known[k] = 0.0
        left[k] = 0.0
    for i in range(n):
        known[classes[i]] += weights[i]
        kw += weights[i]
    if n < 2 or kw <= 0.0:
        return thresholds[:0], gains[:0], infos[:0], usable[:0]
    h_known = _entropy(known, n_classes, kw)
    frac = kw / total_weight
    with nogil:
        for i in range(n - 1):
            left[classes[i]] += weights[i]
            lw += weights[i]
            if values[i] == values[i + 1]:
                continue
            rw = kw - lw
            for k in range(n_classes):
                right[k] = known[k] - left[k]
            h_l = _entropy(left, n_classes, lw)
            h_r = _entropy(right, n_classes, rw)
            gain = frac * (h_known - (lw / kw) * h_l - (rw / kw) * h_r)
            if gain < 0.0:
                gain = 0.0
            sides[0] = lw
            sides[1] = rw
            si = _entropy(sides, 2, kw)
            mid = (values[i] + values[i + 1]) / 2.0
            if mid >= values[i + 1]:
                mid = values[i]
            t_v[m] = mid
            g_v[m] = gain
            s_v[m] = si
            u_v[m] = lw >= min_leaf and rw >= min_leaf and si > 0.0
            m += 1
    return thresholds[:m], gains[:m], infos[:m], usable[:m]


def window_minmax(const double[::1] values, int width):
    cdef Py_ssize_t n = values.shape[0], i, j, start, m
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double lo, hi, v
    with nogil:
        for i in range(n):
            lo = INFINITY
            hi = -INFINITY
            m = 0
            start = i - width + 1
            if start < 0:
                start = 0
            for j in range(start, i + 1):
                v = values[j]
                if v == v:
                    m += 1
                    if v < lo:
                        lo = v
                    if v > hi:
                        hi = v
            if m >= 2:
                o[i] = hi - lo
            else:
                o[i] = NAN
    return out


cdef void _accumulate(Py_ssize_t node, const double[:] x, double w,
                      const long[::1] feat, const double[::1] thr,
                      const long[::1] left, const long[::1] right,
                      const double[::1] frac_left, const double[:, ::1] probs,
                      double* acc, Py_ssize_t n_classes) noexcept nogil:
    cdef long f = feat[node]
    cdef Py_ssize_t k
    cdef double v, fl
    if f < 0:
        for k in range(n_classes):
            acc[k] += w * probs[node, k]
        return
    v = x[f]
    if isnan(v):
        fl = frac_left[node]
        _accumulate(left[node], x, w * fl, feat, thr, left, right, frac_left, probs, acc, n_classes)
        _accumulate(right[node], x, w * (1.0 - fl), feat, thr, left, right, frac_left, probs,
                    acc, n_classes)
    elif v <= thr[node]:
        _accumulate(left[node], x, w, feat, thr, left, right, frac_left, probs, acc, n_classes)
    else:
        _accumulate(right[node], x, w, feat, thr, left, right, frac_left, probs, acc, n_classes)


def predict_batch(const double[:, :] X, const long[::1] feat, const double[::1] thr,
                  const long[::1] left, const long[::1] right,
                  const double[::1] frac_left, const long[::1] leaf_class,
                  const double[:, ::1] probs):
    cdef Py_ssize_t n = X.shape[0], n_classes = probs.shape[1], r, k, node, best
    cdef bint missing
    cdef double v
    if n_classes > 64:
        raise ValueError("at most 64 classes supported")
    out_cls = np.empty(n, dtype=np.int64)
    out_p = np.zeros((n, n_classes), dtype=np.float64)
    cdef long[::1] oc = out_cls
    cdef double[:, ::1] op = out_p
    cdef double[64] acc
    with nogil:
        for r in range(n):
            node = 0
            missing = False
            while feat[node] >= 0:
                v = X[r, feat[node]]
                if v != v:
                    missing = True
                    break
                if v <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            if not missing:
                oc[r] = leaf_class[node]
                for k in range(n_classes):
                    op[r, k] = probs[node, k]
                continue
            for k in range(n_classes):
                acc[k] = 0.0
            _accumulate(0, X[r], 1.0, feat, thr, left, right, frac_left, probs, acc, n_classes)
            best = 0
            for k in range(1, n_classes):
                if acc[k] > acc[best]:
                    best = k
            oc[r] = best
            for k in range(n_classes):
                op[r, k] = acc[k]
    return out_cls, out_p
