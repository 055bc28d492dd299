"""Pure numpy/scipy versions of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; selected
automatically when the extension is unavailable (or GMTKIT_PURE=1).
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def greedy_net(points, eligible, init, sep):
    """Index-order greedy net.

    Starts from the centers ``init`` and scans points in index order, adding an
    eligible point whenever its squared distance to every chosen center is
    >= sep**2. Returns center indices: ``init`` first, then additions.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n_pts = pts.shape[0]
    elig = np.asarray(eligible, dtype=bool)
    chosen = [int(i) for i in np.asarray(init, dtype=np.int64)]
    if n_pts == 0:
        return np.asarray(chosen, dtype=np.int64)
    tree = cKDTree(pts)
    sep2 = float(sep) * float(sep)
    covered = np.zeros(n_pts, dtype=bool)

    def _cover(c):
        idx = np.asarray(tree.query_ball_point(pts[c], float(sep)), dtype=np.int64)
        if idx.size:
            d2 = ((pts[idx] - pts[c]) ** 2).sum(axis=1)
            covered[idx[d2 < sep2]] = True
        covered[c] = True

    for c in chosen:
        _cover(c)
    for i in np.flatnonzero(elig):
        if not covered[i]:
            chosen.append(int(i))
            _cover(i)
    return np.asarray(chosen, dtype=np.int64)


def prefix_content(leaf, parent, cap):
    """Dyadic content of every prefix of an insertion sequence.

    ``leaf[i]`` is the finest-level node of the i-th inserted point, ``parent``
    maps a node to its parent (-1 at the root) and ``cap`` holds diam(node)**d.
    Node value = min(cap, sum of children values); leaves take their cap once
    occupied. Returns the root value after each insertion.
    """
    leaf = np.asarray(leaf, dtype=np.int64)
    parent = np.asarray(parent, dtype=np.int64)
    cap = np.asarray(cap, dtype=np.float64)
    nn = parent.shape[0]
    val = [0.0] * nn
    sumc = [0.0] * nn
    par = parent.tolist()
    caps = cap.tolist()
    root = int(np.flatnonzero(parent < 0)[0]) if nn else -1
    out = np.empty(leaf.shape[0], dtype=np.float64)
    for i, node in enumerate(leaf.tolist()):
        if val[node] == 0.0:
            delta = caps[node]
            val[node] = delta
            p = par[node]
            while p >= 0 and delta != 0.0:
                old = val[p]
                sumc[p] += delta
                nv = sumc[p] if sumc[p] < caps[p] else caps[p]
                delta = nv - old
                val[p] = nv
                p = par[p]
        out[i] = val[root]
    return out


def interval_union_lengths(lo, hi):
    """Union length of intervals [lo, hi] per row; rows must be sorted by lo."""
    lo = np.atleast_2d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_2d(np.asarray(hi, dtype=np.float64))
    if lo.shape[1] == 0:
        return np.zeros(lo.shape[0])
    prev = np.empty_like(hi)
    prev[:, 0] = -np.inf
    prev[:, 1:] = np.maximum.accumulate(hi, axis=1)[:, :-1]
    contrib = hi - np.maximum(lo, prev)
    np.maximum(contrib, 0.0, out=contrib)
    return contrib.sum(axis=1)
