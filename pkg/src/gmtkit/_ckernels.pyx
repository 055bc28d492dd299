# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (see _kernels_py for semantics)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def greedy_net(points, eligible, init, double sep):
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef cnp.uint8_t[::1] elig = np.ascontiguousarray(eligible, dtype=np.uint8)
    cdef cnp.int64_t[::1] ini = np.ascontiguousarray(init, dtype=np.int64)
    cdef Py_ssize_t n_pts = pts.shape[0], dim = pts.shape[1]
    cdef Py_ssize_t m0 = ini.shape[0]
    cdef cnp.int64_t[::1] out = np.empty(m0 + n_pts, dtype=np.int64)
    cdef cnp.uint8_t[::1] is_center = np.zeros(n_pts, dtype=np.uint8)
    cdef double sep2 = sep * sep, d2, t
    cdef Py_ssize_t i, j, k, m = 0, c
    cdef bint ok
    for j in range(m0):
        out[m] = ini[j]
        is_center[ini[j]] = 1
        m += 1
    for i in range(n_pts):
        if not elig[i] or is_center[i]:
            continue
        ok = True
        for j in range(m):
            c = out[j]
            d2 = 0.0
            for k in range(dim):
                t = pts[i, k] - pts[c, k]
                d2 = d2 + t * t
            if d2 < sep2:
                ok = False
                break
        if ok:
            out[m] = i
            is_center[i] = 1
            m += 1
    return np.asarray(out[:m]).copy()


def prefix_content(leaf, parent, cap):
    cdef cnp.int64_t[::1] lf = np.ascontiguousarray(leaf, dtype=np.int64)
    cdef cnp.int64_t[::1] par = np.ascontiguousarray(parent, dtype=np.int64)
    cdef double[::1] cp = np.ascontiguousarray(cap, dtype=np.float64)
    cdef Py_ssize_t nn = par.shape[0], m = lf.shape[0], i
    cdef double[::1] val = np.zeros(nn, dtype=np.float64)
    cdef double[::1] sumc = np.zeros(nn, dtype=np.float64)
    cdef double[::1] out = np.empty(m, dtype=np.float64)
    cdef cnp.int64_t node, p, root = -1
    cdef double delta, old, nv
    for i in range(nn):
        if par[i] < 0:
            root = i
            break
    for i in range(m):
        node = lf[i]
        if val[node] == 0.0:
            delta = cp[node]
            val[node] = delta
            p = par[node]
            while p >= 0 and delta != 0.0:
                old = val[p]
                sumc[p] += delta
                nv = sumc[p] if sumc[p] < cp[p] else cp[p]
                delta = nv - old
                val[p] = nv
                p = par[p]
        out[i] = val[root]
    return np.asarray(out)


def interval_union_lengths(lo, hi):
    cdef double[:, ::1] a = np.ascontiguousarray(np.atleast_2d(lo), dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(np.atleast_2d(hi), dtype=np.float64)
    cdef Py_ssize_t rows = a.shape[0], cols = a.shape[1], r, i
    cdef double[::1] out = np.zeros(rows, dtype=np.float64)
    cdef double run, s, start
    for r in range(rows):
        run = -1e308
        s = 0.0
        for i in range(cols):
            start = a[r, i] if a[r, i] > run else run
            if b[r, i] > start:
                s += b[r, i] - start
            if b[r, i] > run:
                run = b[r, i]
        out[r] = s
    return np.asarray(out)
