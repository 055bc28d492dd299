"""Beta numbers: sup (Jones), L^p against a measure, L^p against dyadic content."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from ._parallel import pmap
from .geometry import (AffinePlane, complement, fit_plane_l2, fit_plane_minimax,
                       orthonormalize, plane_distances)
from .lattice import CDLattice
from .measure import AtomicMeasure, _choquet_sorted
from .setgen import ContentTree, PointCloud, dyadic_frame_level, resolution_level

FLAVORS = ("infty", "measure_lp", "content_lp")
FLAT_TOL = 1e-12


@dataclass
class BetaRecord:
    cube_id: int
    multiplier: float
    flavor: str
    value: float
    plane: AffinePlane | None
    p: float = math.inf
    radius: float = 0.0
    level: int = -1
    empty: bool = False
    below_cutoff: bool = False


def max_p(d: int) -> float:
    """Upper end of the admissible exponent range: 2d/(d-2) for d > 2."""
    return 2.0 * d / (d - 2) if d > 2 else math.inf


def _in_ball(points, center, r):
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    c = np.asarray(center, dtype=np.float64)
    return ((pts - c) ** 2).sum(axis=1) <= r * r * (1 + 1e-12)


# ---------------------------------------------------------------- sup beta

def beta_infty(cloud, center, r: float, d: int, budget: int = 8, idx=None,
               cube_id: int = -1, multiplier: float = 1.0) -> BetaRecord:
    """inf_L sup_{y in E cap B} dist(y, L) / r."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.atleast_2d(cloud)
    sel = pts[idx] if idx is not None else pts[_in_ball(pts, center, r)]
    if len(sel) == 0:
        return BetaRecord(cube_id, multiplier, "infty", 0.0, None, math.inf, r, empty=True)
    plane, sup = fit_plane_minimax(sel, d, budget=budget)
    return BetaRecord(cube_id, multiplier, "infty", float(sup / r), plane, math.inf, r)


# ---------------------------------------------------------------- measure beta

def _lp_objective(pts, w, r, p, d):
    def value(plane):
        dist = plane_distances(pts, plane) / r
        return float((w * dist ** p).sum() / r ** d)
    return value


def _plane_search(x0_plane: AffinePlane, objective, n: int, d: int, starts: list,
                  tol: float = 1e-6, scale: float = 1.0):
    """Local search over planes near ``x0_plane``: Cayley rotation of the frame
    plus a normal offset, optimized by coordinate descent (pattern search)."""
    basis = np.vstack([x0_plane.frame, complement(x0_plane.frame)])
    base0 = x0_plane.base
    nrot = d * (n - d)

    def plane_of(theta):
        a = np.zeros((n, n))
        a[:d, d:] = theta[:nrot].reshape(d, n - d)
        a[d:, :d] = -a[:d, d:].T
        rot = np.linalg.solve(np.eye(n) - 0.5 * a, np.eye(n) + 0.5 * a)
        b = rot @ basis
        return AffinePlane(base0 + theta[nrot:] @ b[d:] * scale, orthonormalize(b[:d]))

    def f(theta):
        return objective(plane_of(theta))

    best_v, best_t = math.inf, None
    for th in starts:
        th = np.asarray(th, dtype=np.float64).copy()
        v = f(th)
        step = 0.25
        while step > tol:
            improved = False
            for i in range(len(th)):
                for sgn in (1.0, -1.0):
                    cand = th.copy()
                    cand[i] += sgn * step
                    cv = f(cand)
                    if cv < v:
                        th, v, improved = cand, cv, True
                        break
            if not improved:
                step *= 0.5
            if v == 0.0:
                break
        if v < best_v:
            best_v, best_t = v, th
        if best_v == 0.0:
            break
    return plane_of(best_t), best_v


def _starts(n, d, budget, seed):
    rng = np.random.default_rng(seed)
    npar = d * (n - d) + (n - d)
    return [np.zeros(npar)] + [rng.normal(scale=0.3, size=npar) for _ in range(budget)]


def beta_measure_lp(mu, center, r: float, p: float, d: int, budget: int = 8,
                    cube_id: int = -1, multiplier: float = 1.0, seed: int = 0) -> BetaRecord:
    """((1/r^d) sum_i w_i (dist(x_i, L)/r)^p)^(1/p) minimized over L.

    ``mu`` is an AtomicMeasure (point-spread atoms) or a (points, weights) pair.
    Exact for p = 2 (weighted PCA); local search from the p = 2 plane otherwise.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if isinstance(mu, AtomicMeasure):
        pts, w = mu.lattice.points, mu.point_masses()
    else:
        pts, w = mu
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        w = np.asarray(w, dtype=np.float64)
    sel = _in_ball(pts, center, r)
    sel &= w > 0
    if not sel.any():
        return BetaRecord(cube_id, multiplier, "measure_lp", 0.0, None, p, r, empty=True)
    P, W = pts[sel], w[sel]
    n = P.shape[1]
    if len(P) <= d:
        from .geometry import _through_points
        return BetaRecord(cube_id, multiplier, "measure_lp", 0.0, _through_points(P, d), p, r)
    plane, resid = fit_plane_l2(P, W, d)
    if p == 2:
        val = math.sqrt(max(resid, 0.0) / r ** (d + 2))
        return BetaRecord(cube_id, multiplier, "measure_lp", val, plane, p, r)
    obj = _lp_objective(P, W, r, p, d)
    v0 = obj(plane)
    if v0 == 0.0 or plane_distances(P, plane).max() <= FLAT_TOL * r:
        return BetaRecord(cube_id, multiplier, "measure_lp", float(v0 ** (1.0 / p)), plane, p, r)
    plane, v = _plane_search(plane, obj, n, d, _starts(n, d, budget, seed), scale=r)
    return BetaRecord(cube_id, multiplier, "measure_lp", float(v ** (1.0 / p)), plane, p, r)


# ---------------------------------------------------------------- content beta

def content_objective(pts, r: float, p: float, d: float, finest_level: int,
                      frame_level: int | None = None):
    """L -> (1/r^d) * Choquet-p integral of dist(., L)/r over the given points."""
    tree = ContentTree(pts, d, finest_level, frame_level)

    def value(plane):
        f = plane_distances(pts, plane) / r
        if not np.any(f > 0):
            return 0.0
        keep = f > 0
        if keep.all():
            return _choquet_sorted(tree, f, p) / r ** d
        # zero values never enter a superlevel set; give them an order slot at the end
        order = np.argsort(-f, kind="stable")
        m = int(keep.sum())
        return _choquet_sorted_prefix(tree, f, order[:m], p) / r ** d
    return value


def _choquet_sorted_prefix(tree, f, order, p):
    fs = f[order]
    pref = tree.prefix(order)
    last = np.flatnonzero(np.r_[fs[1:] != fs[:-1], True])
    tvals = fs[last][::-1]
    conts = pref[last][::-1]
    tp = np.r_[0.0, tvals] ** p
    return float((conts * np.diff(tp)).sum() / p)


def beta_content(cloud, center, r: float, p: float, d: int, finest_level: int | None = None,
                 budget: int = 8, seed: int = 0, tol: float = 1e-6, cube_id: int = -1,
                 multiplier: float = 1.0, frame_level: int | None = None) -> BetaRecord:
    """((1/r^d) int_{E cap B} (dist(y,L)/r)^p dH^d_inf)^(1/p), minimized over L
    by PCA start + seeded restarts + coordinate descent (an upper bound)."""
    if not 1 <= p < max_p(d):
        raise ValueError(f"p must lie in [1, {max_p(d)})")
    pts = cloud.points if isinstance(cloud, PointCloud) else np.atleast_2d(cloud)
    if finest_level is None:
        if not isinstance(cloud, PointCloud):
            raise ValueError("finest_level required for raw points")
        finest_level = resolution_level(cloud.resolution)
    if frame_level is None:
        frame_level = dyadic_frame_level(pts)
    sel = pts[_in_ball(pts, center, r)]
    if len(sel) == 0:
        return BetaRecord(cube_id, multiplier, "content_lp", 0.0, None, p, r, empty=True)
    n = sel.shape[1]
    if len(sel) <= d:
        from .geometry import _through_points
        return BetaRecord(cube_id, multiplier, "content_lp", 0.0, _through_points(sel, d), p, r)
    obj = content_objective(sel, r, p, d, finest_level, frame_level)
    plane0, _ = fit_plane_l2(sel, np.ones(len(sel)), d)
    v0 = obj(plane0)
    if v0 == 0.0 or plane_distances(sel, plane0).max() <= FLAT_TOL * r:
        # coplanar up to rounding: the PCA plane is optimal
        return BetaRecord(cube_id, multiplier, "content_lp", float(v0 ** (1.0 / p)), plane0, p, r)
    plane, v = _plane_search(plane0, obj, n, d, _starts(n, d, budget, seed), tol=tol, scale=r)
    return BetaRecord(cube_id, multiplier, "content_lp", float(v ** (1.0 / p)), plane, p, r)


# ---------------------------------------------------------------- spectra

def beta_spectrum(source, lattice: CDLattice, flavor: str = "infty", multiplier: float = 3.0,
                  p: float = 2.0, d: int | None = None, budget: int = 8,
                  cutoff: float | None = None, threads: int | None = None,
                  levels=None) -> list:
    """One BetaRecord per lattice cube, ball multiplier * B_Q.

    ``source`` is the PointCloud (infty/content flavors) or an AtomicMeasure
    (measure flavor). Cubes whose ball radius is below ``cutoff`` (default
    16 * resolution) are computed but flagged ``below_cutoff``.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}")
    cloud = lattice.cloud
    if d is None:
        d = source.d if isinstance(source, AtomicMeasure) else cloud.d
    if cutoff is None:
        cutoff = 16 * cloud.resolution
    finest = resolution_level(cloud.resolution)
    frame = dyadic_frame_level(lattice.points)
    ks = range(len(lattice.levels)) if levels is None else levels
    jobs = [(int(cid), k) for k in ks for cid in lattice.ids(k)]

    def one(job):
        cid, k = job
        c = lattice.center(cid)
        r = multiplier * lattice.ell(k)
        if flavor == "infty":
            rec = beta_infty(cloud, c, r, d, budget=budget, idx=lattice.tree.query_ball_point(c, r),
                             cube_id=cid, multiplier=multiplier)
        elif flavor == "measure_lp":
            if not isinstance(source, AtomicMeasure):
                raise ValueError("measure flavor needs an AtomicMeasure")
            rec = beta_measure_lp(source, c, r, p, d, budget=budget, cube_id=cid,
                                  multiplier=multiplier)
        else:
            rec = beta_content(cloud, c, r, p, d, finest, budget=budget, cube_id=cid,
                               multiplier=multiplier, frame_level=frame)
        rec.level = k
        rec.below_cutoff = r < cutoff
        return rec

    return pmap(one, jobs, threads)


def spectrum_to_csv(records: list, n: int, d: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cube_id", "level", "ell", "multiplier", "flavor", "p", "beta"]
               + [f"plane_base{i}" for i in range(n)]
               + [f"plane_frame{a}_{i}" for a in range(d) for i in range(n)])
    for rec in records:
        if rec.plane is None:
            tail = [""] * (n + n * d)
        else:
            tail = [repr(float(v)) for v in rec.plane.base] + \
                   [repr(float(v)) for v in rec.plane.frame.ravel()]
        w.writerow([rec.cube_id, rec.level, repr(rec.radius / rec.multiplier), rec.multiplier,
                    rec.flavor, rec.p, repr(rec.value)] + tail)
    return buf.getvalue()
