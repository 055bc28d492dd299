"""Atomic measures on lattices: doubling and classical Frostman measures,
diagnostics, and Choquet integration against dyadic content."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .lattice import CDLattice
from .setgen import ContentTree, PointCloud, dyadic_frame_level, grouped_content, resolution_level

C0_CAP = 2.0 ** 20
REL_TOL = 1e-12


@dataclass
class AtomicMeasure:
    """Mass per level-k cube. Ball masses use the point-spread mode: a cube's
    mass is split uniformly over its member points."""
    lattice: CDLattice
    level: int
    mass: np.ndarray
    d: float = 1.0

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=np.float64)
        if self.mass.shape != (len(self.lattice.levels[self.level].centers),):
            raise ValueError("one mass per level cube required")
        if np.any(self.mass < 0) or not np.all(np.isfinite(self.mass)):
            raise ValueError("masses must be finite and nonnegative")
        self._pm = None
        self._tree = None

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def ids(self) -> np.ndarray:
        return self.lattice.ids(self.level)

    def of(self, cid: int) -> float:
        return float(self.mass[cid - self.lattice.levels[self.level].offset])

    def theta(self) -> np.ndarray:
        return self.mass / self.lattice.ell(self.level) ** self.d

    def point_masses(self) -> np.ndarray:
        if self._pm is None:
            L = self.lattice.levels[self.level]
            counts = np.bincount(L.labels, minlength=len(L.centers)).astype(np.float64)
            self._pm = self.mass[L.labels] / counts[L.labels]
        return self._pm

    def ball(self, center, r: float) -> float:
        idx = self.lattice.tree.query_ball_point(np.asarray(center, dtype=np.float64), float(r))
        return float(self.point_masses()[idx].sum()) if idx else 0.0

    def balls(self, centers, radii) -> np.ndarray:
        centers = np.atleast_2d(centers)
        radii = np.broadcast_to(np.asarray(radii, dtype=np.float64), (len(centers),))
        pm = self.point_masses()
        out = np.empty(len(centers))
        for i, (c, r) in enumerate(zip(centers, radii)):
            idx = self.lattice.tree.query_ball_point(c, float(r))
            out[i] = pm[idx].sum() if idx else 0.0
        return out

    def cube_mass(self, cid: int) -> float:
        """mu(Q) for a cube of any level (sum of point masses of its members)."""
        return float(self.point_masses()[self.lattice.members(cid)].sum())

    def cube_masses(self, k: int) -> np.ndarray:
        """mu(Q) for all cubes of level k."""
        L = self.lattice.levels[k]
        return np.bincount(L.labels, weights=self.point_masses(), minlength=len(L.centers))

    def scaled_mass(self, factor: float) -> "AtomicMeasure":
        return AtomicMeasure(self.lattice, self.level, self.mass * factor, self.d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "cube_id", "mass", "theta"])
        for cid, m, t in zip(self.ids(), self.mass, self.theta()):
            w.writerow([self.level, int(cid), repr(float(m)), repr(float(t))])
        return buf.getvalue()


def measures_to_csv(levels: list) -> str:
    out = [levels[0].to_csv()]
    out += [m.to_csv().split("\n", 1)[1] for m in levels[1:]]
    return "".join(out)


# ---------------------------------------------------------------- contents

def cube_contents(lattice: CDLattice, d: float, finest_level: int | None = None) -> list:
    """Dyadic content of every cube's member set, per level."""
    pts = lattice.points
    if finest_level is None:
        finest_level = resolution_level(lattice.cloud.resolution)
    frame = dyadic_frame_level(pts)
    out = []
    for L in lattice.levels:
        out.append(grouped_content(pts, L.labels, len(L.centers), d, finest_level, frame))
    return out


def _check_content(lattice: CDLattice, contents: list):
    if len(lattice.points) < 2 or not contents[0][0] > 0:
        raise ValueError("zero content: degenerate set (a finite set carries no d-dimensional content)")


# ---------------------------------------------------------------- doubling Frostman

@dataclass
class FrostmanResult:
    eta: list
    mu: list
    C0: float
    report: dict
    contents: list
    rich: list = field(default_factory=list)
    poor: list = field(default_factory=list)
    rich_of: list = field(default_factory=list)

    def to_json(self) -> str:
        r = self.report
        return json.dumps({"C0": self.C0, "C1": r["C1"], "Cdb": r["Cdb"], "A": r["A"],
                           "total_mass": r["total_mass"]}, sort_keys=True)


def _redistribute(eta: np.ndarray, nbr_local: list, C0: float):
    """Rich/Poor classification and the three-case mass update on one level."""
    m = len(eta)
    rich_of = [[] for _ in range(m)]
    poor_of = [[] for _ in range(m)]
    for q in range(m):
        eq = eta[q]
        for p in nbr_local[q]:
            if p == q:
                continue
            if eq < 4.0 / C0 * eta[p]:
                rich_of[q].append(p)
            if eq > C0 / 4.0 * eta[p]:
                poor_of[q].append(p)
    poor_set = np.array([len(r) > 0 for r in rich_of], dtype=bool)
    rich_set = np.array([len(p) > 0 for p in poor_of], dtype=bool)
    mu = eta.copy()
    for q in range(m):
        if rich_set[q]:
            mu[q] -= len(poor_of[q]) / C0 * eta[q]
        if poor_set[q]:
            mu[q] += sum(eta[p] for p in rich_of[q]) / C0
    return mu, rich_set, poor_set, rich_of


def _attempt(lattice: CDLattice, contents: list, depth: int, C0: float, nbr_local: list):
    total = float(contents[0][0])
    mus = [np.array([total])]
    etas = [np.array([total])]
    rich_l, poor_l, rich_of_l = [np.zeros(1, bool)], [np.zeros(1, bool)], [[[]]]
    fail = None
    for k in range(1, depth + 1):
        L = lattice.levels[k]
        H = contents[k]
        par = L.parent
        sib = np.bincount(par, weights=H, minlength=len(mus[-1]))
        eta = H / sib[par] * mus[-1][par]
        mu, rich, poor, rich_of = _redistribute(eta, nbr_local[k], C0)
        etas.append(eta)
        mus.append(mu)
        rich_l.append(rich)
        poor_l.append(poor)
        rich_of_l.append(rich_of)
        if fail is None:
            fail = _level_checks(k, mu, mus[-2], par, H, nbr_local[k], C0, rich, poor, total)
        if fail is None:
            dens_prev = mus[-2] / contents[k - 1]
            best = np.array([dens_prev[nb].max() for nb in nbr_local[k - 1]])
            if np.any(mu / H > best[par] * (1 + REL_TOL)):
                fail = (k, "density parent")
    return etas, mus, rich_l, poor_l, rich_of_l, fail


def _level_checks(k, mu, mu_prev, par, H, nbr, C0, rich, poor, total):
    if abs(mu.sum() - total) > REL_TOL * total:
        return (k, "mass conservation")
    if np.any(rich & poor):
        return (k, "Poor/Rich disjointness")
    if np.any(mu > H * (1 + REL_TOL)):
        return (k, "polynomial growth mu_k(B(Q)) <= content(Q)")
    for q, ns in enumerate(nbr):
        for p in ns:
            if mu[q] > C0 * mu[p] * (1 + REL_TOL):
                return (k, "neighbour comparability")
    if np.any(mu_prev[par] > C0 * mu * (1 + REL_TOL)):
        return (k, "parent-child comparability")
    return None


def build_doubling_frostman(lattice: CDLattice, d: float, depth: int | None = None,
                           C0: float | None = None, finest_level: int | None = None) -> FrostmanResult:
    """Per-level measures mu_0..mu_K with Rich/Poor redistribution.

    C0 starts at 4(4+c_n)2^d/(c1 c0^d) (or the given value) and doubles until
    every per-level check passes (mass, Poor/Rich disjointness, growth,
    neighbour and parent-child comparability, density-parent); ValueError if the cap 2^20 is exceeded.
    """
    if depth is None:
        depth = lattice.depth
    if not 1 <= depth <= lattice.depth:
        raise ValueError("depth must lie in [1, lattice depth]")
    contents = cube_contents(lattice, d, finest_level)
    _check_content(lattice, contents)
    nbr_local = [[[p - L.offset for p in lattice.neighbors(int(L.offset + i))]
                  for i in range(len(L.centers))] for L in lattice.levels[:depth + 1]]
    c_n = max(len(lattice.children(c)) + len(lattice.neighbors(c))
              for k in range(depth + 1) for c in lattice.ids(k))
    c0 = lattice.c0
    c1 = min(float((contents[k] / (c0 * lattice.ell(k)) ** d).min()) for k in range(depth + 1))
    start = 4.0 * (4 + c_n) * 2 ** d / (c1 * c0 ** d) if C0 is None else float(C0)
    C = start
    while True:
        etas, mus, rich, poor, rich_of, fail = _attempt(lattice, contents, depth, C, nbr_local)
        if fail is None:
            break
        if C * 2 > C0_CAP:
            raise ValueError(f"C0 search exhausted at level {fail[0]}: {fail[1]}")
        C *= 2
    mu_l = [AtomicMeasure(lattice, k, m, d) for k, m in enumerate(mus)]
    eta_l = [AtomicMeasure(lattice, k, m, d) for k, m in enumerate(etas)]
    total = float(contents[0][0])
    report = {
        "C0": C, "C0_start": start, "c1": c1, "c_n": c_n, "c0": c0,
        "total_mass": total,
        "max_mass_error": max(abs(m.sum() - total) for m in mus) / total,
        "poor_rich_disjoint": all(not np.any(r & p) for r, p in zip(rich, poor)),
        "n_rich": [int(r.sum()) for r in rich], "n_poor": [int(p.sum()) for p in poor],
        "max_content_over_elld": max(float((contents[k] / lattice.ell(k) ** d).max())
                                     for k in range(depth + 1)),
    }
    res = FrostmanResult(eta_l, mu_l, C, report, contents, rich, poor, rich_of)
    report.update(diagnostics(mu_l, lattice, contents=contents))
    return res


# ---------------------------------------------------------------- classical Frostman

def build_classical_frostman(lattice: CDLattice, d: float, depth: int | None = None,
                             finest_level: int | None = None) -> AtomicMeasure:
    """Top-down: children split the parent's mass in proportion to content,
    each capped by its own content."""
    if depth is None:
        depth = lattice.depth
    contents = cube_contents(lattice, d, finest_level)
    _check_content(lattice, contents)
    mass = np.array([contents[0][0]])
    for k in range(1, depth + 1):
        par = lattice.levels[k].parent
        H = contents[k]
        sib = np.bincount(par, weights=H, minlength=len(mass))
        mass = np.minimum(H / sib[par] * mass[par], H)
    return AtomicMeasure(lattice, depth, mass, d)


# ---------------------------------------------------------------- diagnostics

def diagnostics(mu, lattice: CDLattice, contents: list | None = None) -> dict:
    """Growth C1, doubling C_db, density monotonicity A; plus mass-stays and
    density-parent checks when given the per-level list."""
    levels = mu if isinstance(mu, list) else [mu]
    fin = levels[-1]
    d = fin.d
    K = fin.level
    C1, Cdb = 0.0, 1.0
    for k in range(K + 1):
        cen = lattice.centers(k)
        ell = lattice.ell(k)
        b1 = fin.balls(cen, ell)
        C1 = max(C1, float((b1 / ell ** d).max()))
        if k <= max(K - 2, 0):
            b2 = fin.balls(cen, 2 * ell)
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(b1 > 0, b2 / b1, np.inf)
            Cdb = max(Cdb, float(r.max()))
    # density monotonicity on cube masses of the final measure
    theta = [fin.cube_masses(k) / lattice.ell(k) ** d for k in range(K + 1)]
    if any(np.any(t <= 0) for t in theta):
        A = math.inf
    else:
        A = 1.0
        for k in range(1, K + 1):
            anc = np.arange(len(theta[k]))
            for j in range(k - 1, -1, -1):
                anc = lattice.levels[j + 1].parent[anc]
                A = max(A, float((theta[k] / theta[j][anc]).max()))
    out = {"C1": C1, "Cdb": Cdb, "A": A, "total_mass": fin.total}
    if isinstance(mu, list) and len(mu) > 1:
        out.update(mass_stays(mu, lattice))
        out.update(density_parent(mu, lattice, contents))
    return out


def _center_ball_sums(lattice: CDLattice, j: int, mass: np.ndarray, centers, radius) -> np.ndarray:
    tree = cKDTree(lattice.centers(j))
    res = tree.query_ball_point(np.atleast_2d(centers), radius)
    return np.array([mass[r].sum() if len(r) else 0.0 for r in res])


def mass_stays(mu: list, lattice: CDLattice) -> dict:
    """For j >= k, Q in D_k: mu_j(2B_Q) >= mu_k(B(Q)) and mu_j(B_Q) <= mu_k(10B_Q).

    mu_k lives on the small balls B(P); for these checks it is represented by
    atoms at the centers x_P.
    """
    checked = failed1 = failed2 = 0
    worst1, worst2 = math.inf, 0.0
    K = len(mu) - 1
    for k in range(K + 1):
        cen = lattice.centers(k)
        ell = lattice.ell(k)
        mk = mu[k].mass
        ten = _center_ball_sums(lattice, k, mk, cen, 10 * ell * (1 + 1e-12))
        for j in range(k, K + 1):
            mj = mu[j].mass
            two = _center_ball_sums(lattice, j, mj, cen, 2 * ell * (1 + 1e-12))
            one = _center_ball_sums(lattice, j, mj, cen, ell * (1 + 1e-12))
            tol = REL_TOL * mu[0].total
            f1 = two < mk - tol
            f2 = one > ten + tol
            checked += len(cen)
            failed1 += int(f1.sum())
            failed2 += int(f2.sum())
            with np.errstate(divide="ignore", invalid="ignore"):
                worst1 = min(worst1, float(np.min(np.where(mk > 0, two / mk, np.inf))))
                worst2 = max(worst2, float(np.max(np.where(ten > 0, one / ten, 0.0))))
    return {"mass_stays_checked": checked, "mass_stays_fail_lower": failed1,
            "mass_stays_fail_upper": failed2, "mass_stays_min_ratio": worst1,
            "mass_stays_max_ratio": worst2,
            "mass_stays_ok": failed1 == 0 and failed2 == 0}


def density_parent(mu: list, lattice: CDLattice, contents: list | None = None) -> dict:
    """For every Q in D_k there is R in Nbd(Q^1) with
    mu_k(Q)/H(Q) <= mu_{k-1}(R)/H(R)."""
    if contents is None:
        contents = cube_contents(lattice, mu[0].d)
    fails = checked = 0
    for k in range(1, len(mu)):
        Lk, Lp = lattice.levels[k], lattice.levels[k - 1]
        dens_prev = mu[k - 1].mass / contents[k - 1]
        dens = mu[k].mass / contents[k]
        for i in range(len(Lk.centers)):
            par = int(Lp.offset + Lk.parent[i])
            best = max(dens_prev[r - Lp.offset] for r in lattice.neighbors(par))
            checked += 1
            if dens[i] > best * (1 + REL_TOL):
                fails += 1
    return {"density_parent_checked": checked, "density_parent_fail": fails,
            "density_parent_ok": fails == 0}


# ---------------------------------------------------------------- Choquet

def choquet_integral(points, values, p: float = 1.0, d: float = 1.0,
                     finest_level: int | None = None, region=None,
                     frame_level: int | None = None) -> float:
    """sum_j content({f > t_j}) (t_{j+1}^p - t_j^p)/p over the sorted distinct
    values t_0 = 0 < t_1 < ... (the printed form, without a factor p)."""
    if isinstance(points, PointCloud):
        if finest_level is None:
            finest_level = resolution_level(points.resolution)
        pts = points.points
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if finest_level is None:
        raise ValueError("finest_level required")
    if p < 1:
        raise ValueError("p must be >= 1")
    f = np.asarray(values, dtype=np.float64).reshape(-1)
    if f.shape[0] != len(pts):
        raise ValueError("one value per point required")
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ValueError("values must be finite and nonnegative")
    if frame_level is None:
        frame_level = dyadic_frame_level(pts)
    if region is not None:
        mask = region(pts) if callable(region) else np.asarray(region, dtype=bool)
        pts, f = pts[mask], f[mask]
    keep = f > 0
    if not keep.any():
        return 0.0
    pts, f = pts[keep], f[keep]
    tree = ContentTree(pts, d, finest_level, frame_level)
    return _choquet_sorted(tree, f, p)


def _choquet_sorted(tree: ContentTree, f: np.ndarray, p: float) -> float:
    order = np.argsort(-f, kind="stable")
    fs = f[order]
    pref = tree.prefix(order)
    # distinct values descending; superlevel {f > t_j} = {f >= t_{j+1}}
    last = np.flatnonzero(np.r_[fs[1:] != fs[:-1], True])
    tvals = fs[last][::-1]          # ascending t_1 < ... < t_m
    conts = pref[last][::-1]        # content({f >= t_i})
    tp = np.r_[0.0, tvals] ** p
    return float((conts * np.diff(tp)).sum() / p)


def jensen_constant(points, values, p: float, d: float, finest_level: int) -> float:
    """Smallest C with (1/H) int f <= C ((1/H) int f^p)^(1/p) on this instance."""
    pts = np.atleast_2d(points)
    H = ContentTree(pts, d, finest_level, dyadic_frame_level(pts)).content()
    lhs = choquet_integral(pts, values, 1.0, d, finest_level) / H
    rhs = (choquet_integral(pts, values, p, d, finest_level) / H) ** (1.0 / p)
    return lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
