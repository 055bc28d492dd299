"""Compiled vs pure-Python kernels: wall time per call and result parity.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from gmtkit import _kernels, setgen
from gmtkit.setgen import ContentTree


def cases(rng):
    pts = rng.uniform(0, 1, (20000, 2))
    yield ("greedy_net 20k pts", "greedy_net",
           (pts, np.ones(len(pts), bool), np.array([0], dtype=np.int64), 0.01))
    k = setgen.koch(7)
    tree = ContentTree(k.points, 1.0, 14)
    order = rng.permutation(len(k))
    yield ("prefix_content koch(7)", "prefix_content", (tree.leaf[order], tree.parent, tree.cap))
    lo = np.sort(rng.uniform(0, 1, (500, 4000)), axis=1)
    yield ("interval_union 500x4000", "interval_union_lengths", (lo, lo + 1e-3))


def best_time(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    py = _kernels.backend("python")
    try:
        cy = _kernels.backend("cython")
    except ImportError:
        cy = None
        print("compiled kernels not built; timing the fallback only")
    print(f"{'kernel':28s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}  parity")
    for label, name, a in cases(rng):
        tp, op = best_time(getattr(py, name), a, args.repeat)
        if cy is None:
            print(f"{label:28s} {tp:11.4f} {'-':>11s} {'-':>8s}  -")
            continue
        tc, oc = best_time(getattr(cy, name), a, args.repeat)
        same = np.allclose(op, oc, rtol=0, atol=1e-12) if op.dtype.kind == "f" else np.array_equal(op, oc)
        print(f"{label:28s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}x  {'ok' if same else 'MISMATCH'}")


if __name__ == "__main__":
    main()
