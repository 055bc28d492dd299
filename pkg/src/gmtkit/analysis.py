"""Multiscale functionals: TST sums, flatness functional, capacity and Denjoy
lower bounds, wiggliness and dimension estimates."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._parallel import pmap
from .beta import beta_measure_lp, beta_spectrum
from .lattice import CDLattice, build_lattice
from .measure import build_classical_frostman, build_doubling_frostman
from .setgen import PointCloud, cell_index, dyadic_content, resolution_level

UNIVERSAL_CAVEAT = "lower bound modulo the unknown universal constant of the flatness criterion"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def hd_measure(cloud: PointCloud, mask=None, d: int | None = None) -> tuple[float, str]:
    """H^d of (part of) a generated set: arclength for curves, else dyadic content."""
    d = cloud.d if d is None else d
    if cloud.curve and d == 1:
        return cloud.arclength(mask), "arclength"
    pts = cloud.points if mask is None else cloud.points[np.asarray(mask)]
    return dyadic_content(pts, d, resolution_level(cloud.resolution)), "dyadic_content"


# ---------------------------------------------------------------- TST

@dataclass
class TstReport:
    root: int
    p: float
    multiplier: float
    beta_sum: float
    hd: float
    hd_method: str
    ell_root: float
    ratio: float
    n_cubes: int

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), sort_keys=True)


def tst_sum(spectrum: list, lattice: CDLattice, Q0: int = 0, d: int | None = None) -> TstReport:
    """beta(Q0) = sum over D(Q0) of beta(C0 B_Q)^2 ell(Q)^d and the ratio
    (ell(Q0)^d + beta(Q0)) / H^d(Q0)."""
    cloud = lattice.cloud
    d = cloud.d if d is None else d
    by_id = {rec.cube_id: rec for rec in spectrum}
    cubes = lattice.descendants(Q0)
    missing = [q for q in cubes if q not in by_id]
    if missing:
        raise ValueError(f"spectrum misses {len(missing)} cubes of D(Q0), e.g. {missing[0]}")
    total = 0.0
    for q in cubes:          # ascending id: deterministic summation order
        rec = by_id[q]
        total += rec.value ** 2 * lattice.ell(lattice.level_of(q)) ** d
    mask = np.zeros(len(lattice.points), dtype=bool)
    mask[lattice.members(Q0)] = True
    hd, how = hd_measure(cloud, mask, d)
    ell0 = lattice.ell(lattice.level_of(Q0))
    rec0 = by_id[Q0]
    return TstReport(int(Q0), float(rec0.p), float(rec0.multiplier), float(total), float(hd), how,
                     ell0, float((ell0 ** d + total) / hd) if hd > 0 else math.inf, len(cubes))


# ---------------------------------------------------------------- flatness

def flatness_terms(mu, lattice: CDLattice, d: int | None = None, multiplier: float = 2.0,
                   threads: int | None = None) -> np.ndarray:
    """beta_{mu,2}(2B_Q)^2 theta_mu(2B_Q) mu(Q) per lattice cube (global id order)."""
    fin = mu[-1] if isinstance(mu, (list, tuple)) else mu
    d = int(fin.d if d is None else d)
    pts, pm = lattice.points, fin.point_masses()
    ks = range(fin.level + 1)
    jobs = [(int(c), k) for k in ks for c in lattice.ids(k)]
    masses = {k: fin.cube_masses(k) for k in ks}

    def one(job):
        cid, k = job
        x = lattice.center(cid)
        r = multiplier * lattice.ell(k)
        b = beta_measure_lp((pts, pm), x, r, 2, d).value
        theta = fin.ball(x, r) / r ** d
        return b * b * theta * masses[k][cid - lattice.levels[k].offset]

    return np.asarray(pmap(one, jobs, threads))


def flatness_functional(mu, lattice: CDLattice, d: int | None = None, multiplier: float = 2.0,
                        threads: int | None = None) -> float:
    """sum_Q beta_{mu,2}(2B_Q)^2 theta_mu(2B_Q) mu(Q) over all cubes up to the measure level."""
    return float(flatness_terms(mu, lattice, d, multiplier, threads).sum())


# ---------------------------------------------------------------- capacity

def capacity_lower_bound(cloud: PointCloud, d: int | None = None, depth: int = 6,
                         rho: float = 0.5, c0: float | None = None,
                         threads: int | None = None) -> dict:
    """Doubling Frostman mu rescaled by 1/C1 (so mu(B) <= r^d on lattice balls),
    F = flatness functional, c = min(1, sqrt(mu(E)/F)), bound = c mu(E)."""
    d = cloud.d if d is None else d
    lat = build_lattice(cloud, rho=rho, c0=c0, depth=depth)
    fr = build_doubling_frostman(lat, d)
    C1 = max(float(fr.report["C1"]), 1e-300)
    mu = fr.mu[-1].scaled_mass(1.0 / C1)
    mass = mu.total
    F = flatness_functional(mu, lat, d, threads=threads)
    c = 1.0 if F <= 0 else min(1.0, math.sqrt(mass / F))
    return {"bound": c * mass, "c_rescale": c, "mu_total": mass, "flatness": F,
            "flatness_over_mass": F / mass, "C1": C1, "frostman_C0": fr.C0,
            "depth": depth, "rho": rho, "caveat": UNIVERSAL_CAVEAT}


# ---------------------------------------------------------------- Denjoy

def _subset_index(E: PointCloud, S: PointCloud) -> np.ndarray:
    if len(E) == 0:
        return np.zeros(0, dtype=np.int64)
    dist, idx = cKDTree(S.points).query(E.points)
    if np.any(dist > 1e-12):
        raise ValueError("E is not a subset of Sigma")
    return idx


def _max_depth(cloud: PointCloud, rho: float, depth: int) -> int:
    diam = cloud.diam
    k = 0
    while k < depth and rho ** (k + 1) * diam >= cloud.resolution * (1 - 1e-9):
        k += 1
    return k


def denjoy_bound(E: PointCloud, sigma: PointCloud, d: int | None = None, depth: int = 6,
                 rho: float = 0.5, flavor: str = "content_lp", multiplier: float = 3.0,
                 threads: int | None = None) -> dict:
    """sigma(E) = C2 mu(E) with mu the classical Frostman measure of E and
    C2 = (mu(E) / (C1 H^d(Sigma)))^(1/2).

    C1 = (TST sum of Sigma + H^d_inf(Sigma)) / H^d(Sigma) depends on Sigma only;
    the measured beta^2(mu) / H^d(Sigma) is reported next to it.
    """
    d = sigma.d if d is None else d
    idx = _subset_index(E, sigma)
    if len(idx) == 0:
        return {"bound": 0.0, "mu_E": 0.0, "C1": math.nan, "C2": 0.0, "caveat": UNIVERSAL_CAVEAT}
    slat = build_lattice(sigma, rho=rho, depth=depth)
    hs, how = hd_measure(sigma, None, d)
    finest = resolution_level(sigma.resolution)
    spec = beta_spectrum(sigma, slat, flavor=flavor, multiplier=multiplier, p=2, d=d,
                         threads=threads)
    tst = tst_sum(spec, slat, 0, d)
    h_inf_sigma = dyadic_content(sigma.points, d, finest)
    C1 = (tst.beta_sum + h_inf_sigma) / hs
    if len(idx) >= 2:
        elat = build_lattice(E, rho=rho, depth=_max_depth(E, rho, depth))
        mu = build_classical_frostman(elat, d, finest_level=finest)
        pmE = mu.point_masses()
    else:
        raise ValueError("zero content: E has fewer than two points")
    muE = float(pmE.sum())
    pm = np.zeros(len(sigma.points))
    np.add.at(pm, idx, pmE)
    # measured beta^2(mu) over Sigma's cubes, balls 3B_Q
    tot = 0.0
    for k in range(len(slat.levels)):
        L = slat.levels[k]
        cm = np.bincount(L.labels, weights=pm, minlength=len(L.centers))
        r = multiplier * slat.ell(k)
        for i in np.flatnonzero(cm > 0):
            x = slat.points[L.centers[i]]
            b = beta_measure_lp((slat.points, pm), x, r, 2, d).value
            ball = pm[slat.tree.query_ball_point(x, r)].sum()
            tot += b * b * ball / r ** d * cm[i]
    C2 = math.sqrt(muE / (C1 * hs))
    return {"bound": C2 * muE, "mu_E": muE, "C1": C1, "C2": C2, "tst_sigma": tst.beta_sum,
            "hd_sigma": hs, "hd_method": how, "h_inf_sigma": h_inf_sigma,
            "beta2_mu": tot, "beta2_mu_over_hd": tot / hs,
            "caveat": UNIVERSAL_CAVEAT}


# ---------------------------------------------------------------- wiggliness

def wiggliness(cloud: PointCloud, lattice: CDLattice, flavor: str = "infty", p: float = 2.0,
               multiplier: float = 1.0, cutoff: float | None = None, budget: int = 8,
               threads: int | None = None, source=None, d: int | None = None) -> dict:
    """beta_0 = min of beta over lattice balls with cutoff <= r < diam(E)."""
    if cutoff is None:
        cutoff = 16 * cloud.resolution
    diam = lattice.diam
    ks = [k for k in range(len(lattice.levels))
          if cutoff <= multiplier * lattice.ell(k) < diam * (1 - 1e-12)]
    if not ks:
        raise ValueError("no lattice ball between the cutoff and diam(E)")
    src = cloud if source is None else source
    spec = beta_spectrum(src, lattice, flavor=flavor, multiplier=multiplier, p=p, d=d,
                         budget=budget, cutoff=cutoff, threads=threads, levels=ks)
    vals = [r for r in spec if not r.empty]
    worst = min(vals, key=lambda r: (r.value, r.cube_id))
    return {"beta0": float(worst.value), "cube_id": int(worst.cube_id), "level": int(worst.level),
            "radius": float(worst.radius), "flavor": flavor, "multiplier": multiplier,
            "cutoff": cutoff, "n_balls": len(vals)}


# ---------------------------------------------------------------- dimension

def box_dimension(cloud, level_range=None) -> float:
    """Least-squares slope of log2 #(occupied dyadic cubes) against the level."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.atleast_2d(cloud)
    if level_range is None:
        if not isinstance(cloud, PointCloud):
            raise ValueError("level_range required for raw points")
        fl = resolution_level(cloud.resolution)
        level_range = (2, fl - 1)
    lo, hi = level_range
    if hi - lo + 1 < 3:
        raise ValueError("need at least 3 levels")
    lv = np.arange(lo, hi + 1)
    cnt = np.array([len(np.unique(cell_index(pts, int(k)), axis=0)) for k in lv])
    return float(np.polyfit(lv, np.log2(cnt), 1)[0])


@dataclass
class WigglyReport:
    mode: str
    beta0: float
    delta: float | None
    kappa: int
    levels: list
    counts: list                  # #S_j per generation
    branching: list               # per-cube #S(I): min / mean / max per generation
    s_emp: float | None
    s_cube_min: float | None      # min over I of log #S(I) / (kappa log 2)
    closed_form: float
    c: float
    symbolic: bool
    measure_total: float | None = None
    growth_C: float | None = None
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), sort_keys=True)


def _rescale(masses, parents, j, scale):
    """Multiply the subtree masses under each level-j cube by scale[cube]."""
    f = scale
    for t in range(j + 1, len(masses)):
        f = f[parents[t]]
        masses[t] = masses[t] * f
    return masses


def wiggly_dimension(cloud: PointCloud, d: int, beta0: float, delta: float | None = None,
                     mode: str = "empirical", kappa: int = 2, c: float = 1e-6,
                     max_level: int | None = None, n_balls: int = 200, seed: int = 0) -> WigglyReport:
    """Dimension lower bound for a wiggly set.

    empirical: S_j = dyadic cubes of level j*kappa meeting E, each attached to
    the S_{j-1} cube containing it; s_emp = min over generations of
    log2(#S_{j+1} / #S_j) / kappa. A bottom-to-top Frostman measure on the tree
    certifies mu(B(x,r)) <= C r^s_emp with C measured on sampled balls.
    paper: kappa = ceil(10^6 C1^-1 beta0^-2) with C1 = 10^6 c and the
    closed form d + c beta0^(2(d+1)) (symbolic when kappa exceeds the depth).
    """
    if not beta0 > 0:
        raise ValueError("beta0 must be positive")
    if mode not in ("empirical", "paper"):
        raise ValueError("mode must be 'empirical' or 'paper'")
    closed = d + c * beta0 ** (2 * (d + 1))
    fl = resolution_level(cloud.resolution) - 1 if max_level is None else max_level
    if mode == "paper":
        C1 = c * 1e6
        kap = int(math.ceil(1e6 / (C1 * beta0 ** 2)))
        return WigglyReport("paper", beta0, delta, kap, [], [], [], None, None, closed, c,
                            kap > fl, notes=["kappa from the ceiling formula; no construction run"])
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    pts = cloud.points
    J = fl // kappa
    if J < 1:
        raise ValueError("resolution too coarse for one kappa step")
    levels = [j * kappa for j in range(J + 1)]
    keys, parents, counts, branch = [], [None], [], []
    prev_map = None
    for j, lev in enumerate(levels):
        cells = cell_index(pts, lev)
        uniq, inv = np.unique(cells, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        keys.append(uniq)
        counts.append(len(uniq))
        if j > 0:
            par = np.empty(len(uniq), dtype=np.int64)
            par[inv] = prev_map
            parents.append(par)
            nch = np.bincount(par, minlength=counts[j - 1])
            branch.append([int(nch.min()), float(nch.mean()), int(nch.max())])
        prev_map = inv
    rates = [math.log2(counts[j + 1] / counts[j]) / kappa for j in range(J)]
    s_emp = float(min(rates))
    s_cube = float(min(math.log2(b[0]) / kappa for b in branch))
    # bottom-to-top measure with exponent s_emp
    masses = [None] * (J + 1)
    masses[J] = np.full(counts[J], 2.0 ** (-levels[J] * s_emp))
    for j in range(J, 0, -1):
        masses[j - 1] = np.bincount(parents[j], weights=masses[j], minlength=counts[j - 1])
        cap = 2.0 ** (-levels[j - 1] * s_emp)
        scale = np.minimum(1.0, cap / np.maximum(masses[j - 1], 1e-300))
        masses = _rescale(masses, parents, j - 1, scale)
        masses[j - 1] = masses[j - 1] * scale
    total = float(masses[0].sum())
    # growth on sampled balls: leaf atoms at the leaf cube centers
    side = 2.0 ** -levels[J]
    atoms = (keys[J] + 0.5) * side
    tree = cKDTree(atoms)
    rng = np.random.default_rng(seed)
    xs = atoms[rng.integers(0, len(atoms), n_balls)]
    rs = np.exp(rng.uniform(math.log(side), math.log(1.0), n_balls))
    growth = max(float(masses[J][tree.query_ball_point(x, r)].sum()) / r ** s_emp
                 for x, r in zip(xs, rs))
    return WigglyReport("empirical", beta0, delta, kappa, levels, counts, branch, s_emp, s_cube,
                        closed, c, False, total, growth)
