"""Shadows of nets, Favard length and plenty-of-big-projections constants."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import minimum_filter1d

from . import _kernels
from ._parallel import pmap
from .geometry import GrassmannPoint, fibonacci_hemisphere, complement, project
from .lattice import CDLattice
from .setgen import PointCloud


@dataclass
class ProjectionProfile:
    directions: list
    shadows: np.ndarray
    delta: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        first = self.directions[0]
        if isinstance(first, float):
            w.writerow(["angle", "shadow"])
            for a, s in zip(self.directions, self.shadows):
                w.writerow([repr(a), repr(float(s))])
        else:
            n = first.frame.size
            w.writerow([f"frame{i}" for i in range(n)] + ["shadow"])
            for V, s in zip(self.directions, self.shadows):
                w.writerow([repr(float(v)) for v in V.frame.ravel()] + [repr(float(s))])
        return buf.getvalue()


def _in_ball(pts, ball):
    if ball is None:
        return pts
    c, r = ball
    return pts[((pts - np.asarray(c)) ** 2).sum(1) <= r * r * (1 + 1e-12)]


def interval_union(coords: np.ndarray, delta: float) -> np.ndarray:
    """Length of the union of [x - delta, x + delta] per row of ``coords``."""
    coords = np.sort(np.atleast_2d(coords), axis=1)
    return _kernels.interval_union_lengths(coords - delta, coords + delta)


def grid_volume(coords: np.ndarray, delta: float) -> float:
    """d-volume of the occupancy grid (step delta) of the coords dilated by one cell."""
    coords = np.atleast_2d(coords)
    if len(coords) == 0:
        return 0.0
    dim = coords.shape[1]
    cells = np.floor(coords / delta).astype(np.int64)
    cells = np.unique(cells, axis=0)
    offs = np.array(np.meshgrid(*([[-1, 0, 1]] * dim), indexing="ij")).reshape(dim, -1).T
    dil = np.unique((cells[:, None, :] + offs[None, :, :]).reshape(-1, dim), axis=0)
    return float(len(dil)) * delta ** dim


def shadow_measure(cloud, V, ball=None, delta: float | None = None) -> float:
    """d-volume of pi_V(E cap B) thickened by the net resolution."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.atleast_2d(cloud)
    if delta is None:
        delta = cloud.resolution
    sel = _in_ball(pts, ball)
    if len(sel) == 0:
        return 0.0
    coords = project(sel, V)
    if coords.shape[1] == 1:
        return float(interval_union(coords[:, 0][None, :], delta)[0])
    return grid_volume(coords, delta)


def favard_profile(pts: np.ndarray, n_angles: int, delta: float, chunk: int = 256) -> np.ndarray:
    """Shadow lengths onto span(sin t, cos t), t_i = (i + 1/2) pi / n_angles."""
    theta = (np.arange(n_angles) + 0.5) * np.pi / n_angles
    dirs = np.column_stack([np.sin(theta), np.cos(theta)])
    out = np.empty(n_angles)
    per = max(1, int(4_000_000 // max(len(pts), 1)))
    step = max(1, min(chunk, per))
    for s in range(0, n_angles, step):
        proj = dirs[s:s + step] @ pts.T
        out[s:s + step] = interval_union(proj, delta)
    return out


def favard_length(cloud: PointCloud, n_angles: int = 2000, delta: float | None = None,
                  extrapolate: bool = True) -> float:
    """int_0^pi H^1(pi_theta E) d theta by the midpoint rule.

    With ``extrapolate`` the thickening error is removed to first order:
    2 F(delta/2) - F(delta).
    """
    if cloud.n != 2:
        raise ValueError("Favard length needs n = 2")
    if delta is None:
        delta = cloud.resolution
    h = np.pi / n_angles
    f1 = h * float(favard_profile(cloud.points, n_angles, delta).sum())
    if not extrapolate:
        return f1
    f2 = h * float(favard_profile(cloud.points, n_angles, delta / 2).sum())
    return 2 * f2 - f1


# ---------------------------------------------------------------- PBP

@dataclass
class PBPReport:
    delta_hat: float
    worst_cube_id: int
    worst_scale: float
    per_pair: list
    n_dirs: int
    cutoff: float
    flagged: bool

    def to_json(self) -> str:
        return json.dumps({"delta_hat": self.delta_hat, "worst_cube_id": self.worst_cube_id,
                           "worst_scale": self.worst_scale}, sort_keys=True)


def _best_over_balls(window_min, lo=0.0, hi=1.0, iters=40):
    """Largest delta' with max_V window_min(V, delta') >= delta' (bisection)."""
    if window_min(0.0)[0] <= 0:
        return 0.0, window_min(0.0)[1]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if window_min(mid)[0] >= mid:
            lo = mid
        else:
            hi = mid
    return lo, window_min(lo)[1]


def _pbp_pair_2d(sel, r, delta, n_dirs):
    theta = np.arange(n_dirs) * np.pi / n_dirs
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    s = interval_union(dirs @ sel.T, delta) / r

    def window_min(dp):
        # d_G of lines = |sin(angle difference)|: window half-width arcsin(dp)
        half = int(math.floor(math.asin(min(dp, 1.0)) / (np.pi / n_dirs) + 1e-9))
        if half >= n_dirs // 2:
            m = np.full(n_dirs, s.min())
        else:
            m = minimum_filter1d(s, size=2 * half + 1, mode="wrap")
        i = int(np.argmax(m))
        return float(m[i]), float(theta[i])
    return _best_over_balls(window_min)


def _pbp_pair_nd(sel, r, delta, frames, gram_sin):
    s = np.array([shadow_measure(sel, GrassmannPoint(f), None, delta) for f in frames])
    d = frames[0].shape[0]
    s = s / r ** d

    def window_min(dp):
        mask = gram_sin <= dp + 1e-12
        m = np.where(mask, s[None, :], np.inf).min(axis=1)
        i = int(np.argmax(m))
        return float(m[i]), i
    return _best_over_balls(window_min)


def pbp_constant(cloud: PointCloud, lattice: CDLattice, n_dirs: int | None = None,
                 levels=None, d: int | None = None, cutoff: float | None = None,
                 threads: int | None = None) -> PBPReport:
    """Finite-resolution PBP constant: min over (x_Q, ell(Q)) pairs of the
    largest delta' with a direction ball B(V, delta') all of whose shadows are
    >= delta' r^d."""
    d = cloud.d if d is None else d
    n = cloud.n
    delta = cloud.resolution
    if cutoff is None:
        cutoff = 16 * delta
    diam = lattice.diam
    ks = range(len(lattice.levels)) if levels is None else levels
    pairs = [(int(c), lattice.ell(k)) for k in ks for c in lattice.ids(k)
             if cutoff <= lattice.ell(k) < diam * (1 - 1e-12)]
    if not pairs:
        raise ValueError("no lattice scale between the cutoff and diam(E)")
    if n == 2 and d == 1:
        nd = n_dirs or 720
        frames = gram_sin = None
    else:
        nd = n_dirs or 300
        u = fibonacci_hemisphere(nd)
        if d == 1:
            frames = [v[None, :] for v in u]
        elif d == n - 1:
            frames = [complement(v[None, :]) for v in u]
        else:
            raise ValueError("PBP search implemented for d = 1 or d = n - 1")
        # d_G between lines (or between hyperplanes via their normals) = sin(angle)
        c = np.clip(np.abs(u @ u.T), 0.0, 1.0)
        gram_sin = np.sqrt(1.0 - c * c)

    pts = lattice.points

    def one(pair):
        cid, r = pair
        x = lattice.center(cid)
        sel = _in_ball(pts, (x, r))
        if n == 2 and d == 1:
            val, wit = _pbp_pair_2d(sel, r, delta, nd)
        else:
            val, wi = _pbp_pair_nd(sel, r, delta, frames, gram_sin)
            wit = frames[wi].ravel().tolist()
        return {"cube_id": cid, "scale": r, "delta": val, "witness": wit, "points": len(sel)}

    res = pmap(one, pairs, threads)
    worst = min(res, key=lambda t: (t["delta"], t["cube_id"]))
    flagged = any(t["points"] <= 1 for t in res)
    return PBPReport(worst["delta"], worst["cube_id"], worst["scale"], res, nd, cutoff, flagged)
