"""Compare the compiled and pure-Python kernel backends.

Run with ``python3 benchmarks/bench_kernels.py [--records N] [--repeat R]``.
Each kernel is timed on identical inputs under both backends and the outputs
are checked for equality before any timing is reported.
"""

import argparse
import time

import numpy as np

from aqpipe import _pykernels, kernels
from aqpipe.induction import grow_tree, prune, validation_dataset_from_records
from aqpipe.ingest import SyntheticConfig, synthesize_series


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b, equal_nan=True)


def cases(records):
    ds = validation_dataset_from_records(records, "O3")
    tree = prune(grow_tree(ds))
    ft = tree.flat
    col = ds.X[:, 0]
    order = np.argsort(col, kind="stable")
    vals = np.ascontiguousarray(col[order])
    cls = np.ascontiguousarray(ds.y[order], dtype=np.int64)
    w = np.ones(len(vals))
    series = np.array([np.nan if r.values[1] is None else r.values[1] for r in records])
    return {
        "scan_feature": lambda b: b.scan_feature(vals, cls, w, 2, float(len(vals)), 2.0),
        "window_minmax": lambda b: b.window_minmax(series, 11),
        "predict_batch": lambda b: b.predict_batch(ds.X, ft.feat, ft.thr, ft.left, ft.right,
                                                   ft.frac_left, ft.leaf_class, ft.probs),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--records", type=int, default=16000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        raise SystemExit("compiled extension not built; run `pip install -e .` first")
    records = synthesize_series(SyntheticConfig(seed=42, n_records=args.records))
    print(f"{'kernel':<15} {'cython s':>10} {'python s':>10} {'speedup':>9}")
    for name, call in cases(records).items():
        tc, oc = best_of(lambda: call(kernels.compiled_backend), args.repeat)
        tp, op = best_of(lambda: call(_pykernels), args.repeat)
        if not same(oc, op):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<15} {tc:>10.5f} {tp:>10.5f} {tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
