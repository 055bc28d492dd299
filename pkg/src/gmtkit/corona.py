"""Stopping-time corona decomposition, tree regularization and the skeleton
approximating pair (Gamma, nu).

Cubes are global lattice ids. Densities use the final-level measure:
theta(Q) = mu(Q) / ell(Q)^d with mu(Q) the sum of member point masses.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .beta import beta_measure_lp
from .geometry import GrassmannPoint, project
from .lattice import CDLattice, build_lattice
from .measure import AtomicMeasure
from .setgen import DyadicCube, PointCloud, cell_index, cube_faces, face_key, sample_face

TOL = 1e-12


def _level_array(lat: CDLattice) -> np.ndarray:
    return np.concatenate([np.full(len(L.centers), k, dtype=np.int64)
                           for k, L in enumerate(lat.levels)])


def _final_measure(mu) -> AtomicMeasure:
    if isinstance(mu, (list, tuple)):
        return mu[-1]
    return mu


# ---------------------------------------------------------------- corona

@dataclass
class CoronaForest:
    lattice: CDLattice
    mu: AtomicMeasure
    d: float
    tau: float
    N: int
    mass: np.ndarray          # mu(Q) per global id (levels 0..N)
    theta: np.ndarray         # theta_mu(Q) per global id
    top: list                 # Top_0, Top_1, ... (lists of ids)
    trees: dict               # root -> {"tree","ld","end","stop"}
    report: dict = field(default_factory=dict)

    @property
    def roots(self) -> list:
        return [r for gen in self.top for r in gen]

    def generation(self, R: int) -> int:
        for k, gen in enumerate(self.top):
            if R in gen:
                return k
        raise KeyError(f"{R} is not a root")

    def to_json(self) -> str:
        roles = {}
        for R, t in self.trees.items():
            for q in t["tree"]:
                roles[int(q)] = {"root": int(R), "role": "tree"}
            for q in t["end"]:
                roles[int(q)]["role"] = "End"
            for q in t["ld"]:
                roles[int(q)]["role"] = "LD"
            roles[int(R)]["role"] = "root"
        return json.dumps({"tau": self.tau, "N": self.N,
                           "top": [[int(r) for r in g] for g in self.top],
                           "cubes": {str(k): v for k, v in sorted(roles.items())},
                           "report": self.report}, sort_keys=True)


def _stop_tree(lat: CDLattice, lev, theta, R: int, tau: float, N: int):
    """LD(R), End(R), Tree(R) by depth-first search below R."""
    thr = tau * theta[R]
    tree, ld, end = [R], [], []
    stack = list(lat.children(R)) if lev[R] < N else []
    while stack:
        q = stack.pop()
        tree.append(q)
        if theta[q] <= thr * (1 + TOL):
            ld.append(q)
        elif lev[q] == N:
            end.append(q)
        else:
            stack.extend(lat.children(q))
    return sorted(tree), sorted(ld), sorted(end)


def build_corona(lattice: CDLattice, mu, tau: float = 0.1, N: int | None = None) -> CoronaForest:
    """Top generations, per-root stopping trees and the density checks."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    fin = _final_measure(mu)
    d = fin.d
    if N is None:
        N = fin.level
    if not 1 <= N <= min(fin.level, lattice.depth):
        raise ValueError("N must lie in [1, measure level]")
    lev = _level_array(lattice)
    nid = int(lattice.levels[N].offset + len(lattice.levels[N].centers))
    lev = lev[:nid]
    mass = np.concatenate([fin.cube_masses(k) for k in range(N + 1)])
    ell = np.array([lattice.ell(int(k)) for k in lev])
    theta = mass / ell ** d
    if not mass[0] > 0:
        raise ValueError("mu must be positive on the root")

    top, trees = [[0]], {}
    while True:
        nxt = []
        for R in top[-1]:
            tr, ld, end = _stop_tree(lattice, lev, theta, R, tau, N)
            trees[R] = {"tree": tr, "ld": ld, "end": end, "stop": sorted(ld + end)}
            nxt.extend(q for q in ld if lev[q] < N)
        if not nxt:
            break
        top.append(sorted(nxt))
    forest = CoronaForest(lattice, fin, d, tau, N, mass, theta, top, trees)
    forest.report = verify_corona(forest)
    return forest


def verify_corona(forest: CoronaForest) -> dict:
    lat, theta, mass = forest.lattice, forest.theta, forest.mass
    tau = forest.tau
    rep = {}
    # trees partition D_0^N
    count = np.zeros(len(theta), dtype=np.int64)
    for t in forest.trees.values():
        count[t["tree"]] += 1
    # an LD cube that starts a new generation is the root of its own tree and
    # also a stopping cube of its parent tree; counting it once (as a root)
    # the trees partition D_0^N
    roots = np.asarray(forest.roots[1:], dtype=np.int64)
    count[roots] -= 1
    rep["trees_partition"] = bool(np.all(count == 1))
    # Stop(R): disjoint cover of R, R not in Stop(R)
    stop_ok = True
    for R, t in forest.trees.items():
        covered = np.zeros(len(lat.points), dtype=np.int64)
        for q in t["stop"]:
            covered[lat.members(q)] += 1
        mem = lat.members(R)
        stop_ok &= bool(np.all(covered[mem] == 1) and covered.sum() == len(mem)
                        and R not in t["stop"])
    rep["stop_disjoint_cover"] = bool(stop_ok)
    # Top_k disjoint per generation
    disj = True
    for gen in forest.top:
        cnt = np.zeros(len(lat.points), dtype=np.int64)
        for r in gen:
            cnt[lat.members(r)] += 1
        disj &= bool(cnt.max() <= 1)
    rep["top_disjoint"] = bool(disj)
    # density sandwich per tree: tau theta(R) <= C theta(Q), theta(Q) <= C theta(R)
    lo, hi = math.inf, 0.0
    zero_roots = [int(R) for R in forest.trees if not theta[R] > 0]
    for R, t in forest.trees.items():
        if not theta[R] > 0:
            continue
        q = np.asarray(t["tree"])
        lo = min(lo, float((theta[q] / (tau * theta[R])).min()))
        hi = max(hi, float((theta[q] / theta[R]).max()))
    rep["sandwich_lower"] = lo          # min theta(Q) / (tau theta(R))
    rep["sandwich_upper"] = hi          # max theta(Q) / theta(R)
    rep["sandwich_C"] = max(hi, 1.0 / lo) if lo > 0 else math.inf
    rep["zero_density_roots"] = len(zero_roots)
    # theta(R) <= C tau^k with C = theta(E)
    C = float(theta[0])
    decay = True
    worst = 0.0
    for k, gen in enumerate(forest.top):
        for r in gen:
            worst = max(worst, float(theta[r] / (C * tau ** k)))
            decay &= bool(theta[r] <= C * tau ** k * (1 + TOL))
    rep["decay_C"] = C
    rep["decay_max_ratio"] = worst
    rep["decay_ok"] = bool(decay)
    # Carleson packing over Top generations
    gen_sum = [float(sum(theta[r] * mass[r] for r in gen)) for gen in forest.top]
    packing = float(sum(gen_sum))
    rep["top_generation_sums"] = gen_sum
    rep["top_generation_masses"] = [float(sum(mass[r] for r in g)) for g in forest.top]
    rep["packing_sum"] = packing
    rep["packing_bound"] = 2 * C * float(mass[0])
    rep["packing_ok"] = bool(packing <= 2 * C * mass[0] * (1 + TOL))
    rep["n_roots"] = sum(len(g) for g in forest.top)
    rep["generations"] = len(forest.top)
    return rep


# ---------------------------------------------------------------- regularization

@dataclass
class RegularizedTree:
    root: int
    nbhd: list                # N(R)
    reg: list                 # Reg_*(R)
    tree_star: list           # Tree_*(R)
    points: np.ndarray        # indices of the points of the union of N(R)
    d_R: np.ndarray           # d_R sampled on those points
    report: dict = field(default_factory=dict)


def _tree_distance(forest: CoronaForest, R: int, x: np.ndarray) -> np.ndarray:
    """d_R(x) = min over Tree(R) of dist(x, Q) + ell(Q) (distance to member points)."""
    lat = forest.lattice
    lev = _level_array(lat)
    tree = np.asarray(forest.trees[R]["tree"])
    out = np.full(len(x), math.inf)
    for k in np.unique(lev[tree]):
        cubes = tree[lev[tree] == k]
        idx = np.concatenate([lat.members(int(q)) for q in cubes])
        dist, _ = cKDTree(lat.points[idx]).query(x)
        out = np.minimum(out, dist + lat.ell(int(k)))
    return out


def regularize_tree(forest: CoronaForest, R: int) -> RegularizedTree:
    if R not in forest.trees:
        raise KeyError(f"unknown root {R}")
    lat = forest.lattice
    lev = _level_array(lat)
    N = forest.N
    k = int(lev[R])
    ellR = lat.ell(k)
    near = lat.tree.query_ball_point(lat.center(R), 2 * ellR * (1 + TOL))
    nbhd = sorted(set(int(c) for c in lat.label_of_point(k)[near]))
    pidx = np.sort(np.concatenate([lat.members(q) for q in nbhd]))
    dR = _tree_distance(forest, R, lat.points[pidx])
    dmap = np.full(len(lat.points), math.inf)
    dmap[pidx] = dR
    ellN = lat.ell(N)

    def d_of(q):
        return max(float(dmap[lat.members(q)].min()) / 20.0, ellN)

    reg, star, stack = [], [], list(nbhd)
    while stack:
        q = stack.pop()
        star.append(q)
        if lat.ell(int(lev[q])) <= d_of(q) * (1 + TOL) or lev[q] >= N:
            reg.append(q)
        else:
            stack.extend(lat.children(q))
    rt = RegularizedTree(R, nbhd, sorted(reg), sorted(star), pidx, dR)
    rt.report = _verify_regularized(forest, rt)
    return rt


def _verify_regularized(forest: CoronaForest, rt: RegularizedTree) -> dict:
    lat = forest.lattice
    lev = _level_array(lat)
    rep = {}
    cnt = np.zeros(len(lat.points), dtype=np.int64)
    for q in rt.reg:
        cnt[lat.members(q)] += 1
    rep["reg_disjoint_cover"] = bool(np.all(cnt[rt.points] == 1) and cnt.sum() == len(rt.points))
    rep["tree_in_tree_star"] = bool(set(forest.trees[rt.root]["tree"]) <= set(rt.tree_star))
    reg = np.asarray(rt.reg)
    ells = np.array([lat.ell(int(lev[q])) for q in reg])
    cen = np.array([lat.center(int(q)) for q in reg])
    # comparability of touching Reg cubes (5B_Q meets 5B_P)
    ratio = 1.0
    if len(reg) > 1:
        tree = cKDTree(cen)
        for i, (c, l) in enumerate(zip(cen, ells)):
            for j in tree.query_ball_point(c, 5 * (l + ells.max()) * (1 + TOL)):
                if np.linalg.norm(cen[j] - c) <= 5 * (l + ells[j]) * (1 + TOL):
                    ratio = max(ratio, float(ells[j] / l))
    rep["reg_touching_ratio"] = ratio
    # smallest C0 with 2B_P within C0 B_Q whenever 2B_P meets 2B_Q
    C0 = 0.0
    ctree = cKDTree(cen)
    for q in rt.tree_star:
        lq = lat.ell(int(lev[q]))
        xq = lat.center(int(q))
        for j in ctree.query_ball_point(xq, 2 * (lq + ells.max()) * (1 + TOL)):
            dist = float(np.linalg.norm(cen[j] - xq))
            if dist <= 2 * (lq + ells[j]) * (1 + TOL):
                C0 = max(C0, (dist + 2 * ells[j]) / lq)
    rep["C0"] = C0
    # d_R 1-Lipschitz on sampled pairs
    rng = np.random.default_rng(0)
    m = len(rt.points)
    a, b = rng.integers(0, m, 200), rng.integers(0, m, 200)
    pa, pb = lat.points[rt.points[a]], lat.points[rt.points[b]]
    lip = np.abs(rt.d_R[a] - rt.d_R[b]) <= np.sqrt(((pa - pb) ** 2).sum(1)) * (1 + 1e-9) + 1e-15
    rep["d_R_lipschitz"] = bool(lip.all())
    # density bounds on Tree_*
    th = forest.theta
    R = rt.root
    q = np.asarray(rt.tree_star)
    q = q[q < len(th)]
    rep["star_lower"] = float((th[q] / (forest.tau * th[R])).min())
    rep["star_upper"] = float((th[q] / th[R]).max())
    return rep


# ---------------------------------------------------------------- skeleton approximant

@dataclass
class SkeletonApproximant:
    root: int
    delta: dict               # Reg cube -> list of DyadicCube (Delta_Q)
    faces: dict               # Reg cube -> list of (corner, free, side)
    hd: dict                  # Reg cube -> H^d(Q_Gamma)
    g: dict                   # Reg cube -> density g_Q on Q_Gamma
    cloud: PointCloud         # sampled Gamma
    weights: np.ndarray       # nu mass per sample of Gamma
    nu: AtomicMeasure | None  # nu on Gamma's own lattice
    theta_R: float
    per_side: int = 8
    dropped: list = field(default_factory=list)
    report: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def ball(self, center, r: float) -> float:
        idx = self._tree().query_ball_point(np.asarray(center, dtype=np.float64), r)
        return float(self.weights[idx].sum()) if idx else 0.0

    def _tree(self):
        if not hasattr(self, "_kd"):
            self._kd = cKDTree(self.cloud.points)
        return self._kd


def delta_family(points: np.ndarray, ell: float) -> list:
    """Dyadic cubes I with ell/2 <= side(I) < ell meeting the given points."""
    j = int(math.floor(-math.log2(ell) + 1e-12)) + 1
    idx = np.unique(cell_index(points, j), axis=0)
    return [DyadicCube(j, tuple(int(v) for v in row)) for row in idx]


def skeleton_faces(cubes: list, d: int) -> list:
    """Distinct d-faces of the cubes (all cubes share one level)."""
    faces = {}
    for cube in cubes:
        for c, free in cube_faces(cube, d):
            faces.setdefault(face_key(c, free, cube.level), (c, free, cube.side))
    return list(faces.values())


def build_skeleton_approximant(rt: RegularizedTree, forest: CoronaForest, d: int | None = None,
                               per_side: int = 8, lattice_depth: int | None = None,
                               n_balls: int = 100, seed: int = 0) -> SkeletonApproximant:
    """Gamma = union of the d-skeletons of Delta_P over P in Reg_*(R);
    nu = sum_P mu(P)/H^d(P_Gamma) H^d restricted to P_Gamma, sampled at face
    cell midpoints (per_side^d samples per face)."""
    lat = forest.lattice
    lev = _level_array(lat)
    d = int(forest.d if d is None else d)
    n = lat.cloud.n
    if not 0 < d < n:
        raise ValueError("skeleton dimension must satisfy 0 < d < n")
    delta, faces, hd, g = {}, {}, {}, {}
    chunks, wts, dropped = [], [], []
    for P in rt.reg:
        mP = float(forest.mu.cube_mass(P))
        if not mP > 0:
            dropped.append((int(P), mP))
            continue
        cubes = delta_family(lat.points[lat.members(P)], lat.ell(int(lev[P])))
        fs = skeleton_faces(cubes, d)
        H = len(fs) * cubes[0].side ** d   # distinct d-faces overlap in null sets
        delta[P], faces[P], hd[P], g[P] = cubes, fs, H, mP / H
        for c, free, s in fs:
            pts = sample_face(c, free, s, per_side, centers=True)
            chunks.append(pts)
            wts.append(np.full(len(pts), g[P] * (s / per_side) ** d))
    pts = np.vstack(chunks)
    w = np.concatenate(wts)
    key = np.round(pts, 12)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    w = np.bincount(inv, weights=w, minlength=len(uniq))
    step = min(s for fl in faces.values() for _, _, s in fl) / per_side
    cloud = PointCloud(n, d, step, uniq, label=f"skeleton(R={rt.root})")
    th_R = float(forest.theta[rt.root])
    sk = SkeletonApproximant(rt.root, delta, faces, hd, g, cloud, w, None, th_R, per_side,
                             dropped)
    # nu on Gamma's own lattice
    if lattice_depth is None:
        lattice_depth = 0
        diam = cloud.diam
        while lattice_depth < 6 and lat.rho ** (lattice_depth + 1) * diam >= 4 * step:
            lattice_depth += 1
    glat = build_lattice(cloud, rho=lat.rho, depth=lattice_depth)
    L = glat.levels[-1]
    sk.nu = AtomicMeasure(glat, lattice_depth, np.bincount(L.labels, weights=w,
                                                            minlength=len(L.centers)), d)
    sk.report = _verify_skeleton(sk, rt, forest, n_balls, seed)
    return sk


def _verify_skeleton(sk: SkeletonApproximant, rt: RegularizedTree, forest: CoronaForest,
                     n_balls: int, seed: int) -> dict:
    lat = forest.lattice
    lev = _level_array(lat)
    rep = {}
    reg_mass = float(sum(forest.mu.cube_mass(P) for P in rt.reg))
    rep["nu_total"] = sk.total
    rep["reg_mass"] = reg_mass
    rep["mass_error"] = abs(sk.total - reg_mass) / reg_mass if reg_mass > 0 else 0.0
    rep["dropped"] = sk.dropped
    # Q_Gamma within c * B_Q: measured factor (faces sampled at their vertices)
    fac = 0.0
    for P, fl in sk.faces.items():
        xP = lat.center(int(P))
        lP = lat.ell(int(lev[P]))
        for c, free, s in fl:
            v = sample_face(c, free, s, 1)
            fac = max(fac, float(np.sqrt(((v - xP) ** 2).sum(1)).max() / lP))
    rep["qgamma_ball_factor"] = fac
    xR = lat.center(rt.root)
    lR = lat.ell(int(lev[rt.root]))
    rep["gamma_root_factor"] = float(np.sqrt(((sk.cloud.points - xR) ** 2).sum(1)).max() / lR)
    # bounded overlap: max number of P_Gamma containing a sample point
    cover = np.zeros(len(sk.cloud.points), dtype=np.int64)
    key = {tuple(p): i for i, p in enumerate(np.round(sk.cloud.points, 12))}
    for P, fl in sk.faces.items():
        hit = set()
        for c, free, s in fl:
            for p in np.round(sample_face(c, free, s, sk.per_side, True), 12):
                i = key.get(tuple(p))
                if i is not None:
                    hit.add(i)
        cover[list(hit)] += 1
    rep["overlap_max"] = int(cover.max())
    # h = g / theta(R)
    gv = np.array(list(sk.g.values()))
    rep["h_min"] = float(gv.min() / sk.theta_R)
    rep["h_max"] = float(gv.max() / sk.theta_R)
    # ADR on sampled balls: nu(B(x,r)) / (theta(R) r^d)
    rng = np.random.default_rng(seed)
    pts = sk.cloud.points
    diam = sk.cloud.diam
    rmin = 4 * sk.cloud.resolution
    xs = pts[rng.integers(0, len(pts), n_balls)]
    rs = np.exp(rng.uniform(math.log(rmin), math.log(diam), n_balls))
    ratios = np.array([sk.ball(x, r) / (sk.theta_R * r ** sk.cloud.d) for x, r in zip(xs, rs)])
    rep["adr_min"] = float(ratios.min())
    rep["adr_max"] = float(ratios.max())
    rep["adr_C"] = float(max(ratios.max(), 1.0 / ratios.min()))
    return rep




# ---------------------------------------------------------------- transfer / packing

def transfer_check(forest: CoronaForest, rt: RegularizedTree, sk: SkeletonApproximant,
                   C0: float | None = None) -> dict:
    """beta_{mu,2}(2B_Q)^2 against beta_{nu,2}(C0 B_Q)^2 + correction for every
    Q in Tree(R); and the packing sum of the corrections against mu(R)."""
    lat = forest.lattice
    lev = _level_array(lat)
    d = int(forest.d)
    if C0 is None:
        C0 = float(rt.report["C0"])
    pm = forest.mu.point_masses()
    reg = np.asarray(rt.reg)
    rl = np.array([lat.ell(int(lev[p])) for p in reg])
    rc = np.array([lat.center(int(p)) for p in reg])
    rm = np.array([forest.mu.cube_mass(int(p)) for p in reg])
    worst, packing = 0.0, 0.0
    rows = []
    for q in forest.trees[rt.root]["tree"]:
        lq = lat.ell(int(lev[q]))
        xq = lat.center(int(q))
        lhs = beta_measure_lp((lat.points, pm), xq, 2 * lq, 2, d).value ** 2
        nu_b = beta_measure_lp((sk.cloud.points, sk.weights), xq, C0 * lq, 2, d).value ** 2
        inside = np.sqrt(((rc - xq) ** 2).sum(1)) + 2 * rl <= C0 * lq * (1 + TOL)
        corr_sum = float((rl[inside] / lq * rm[inside]).sum())
        corr = corr_sum / lq ** d
        packing += corr_sum
        rhs = nu_b + corr
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs <= 1e-24 else math.inf)
        worst = max(worst, ratio)
        rows.append((int(q), lhs, nu_b, corr))
    mR = float(forest.mass[rt.root])
    return {"C0": C0, "transfer_C": worst, "packing_sum": packing,
            "packing_C": packing / mR if mR > 0 else math.inf, "rows": rows}


# ---------------------------------------------------------------- skeleton projection

def verify_skeleton_projection(I: DyadicCube, V: GrassmannPoint, grid_step: float):
    """Sample I and its d-skeleton (d = dim V) on a grid, project both onto V and
    return (max defect <= 2 grid_step, max defect), the defect being the
    distance from a projected cube sample to the projected skeleton samples."""
    d = V.d
    n = len(I.index)
    if not d < n:
        raise ValueError("need d < n")
    m = max(1, int(math.ceil(I.side / grid_step - 1e-9)))
    t = np.linspace(0.0, I.side, m + 1)
    grid = np.stack(np.meshgrid(*([t] * n), indexing="ij"), axis=-1).reshape(-1, n) + I.corner
    if d == 0:
        skel = np.vstack([c[None, :] for c, _ in cube_faces(I, 0)])
    else:
        skel = np.vstack([sample_face(c, free, I.side, m) for c, free in cube_faces(I, d)])
    pc = project(grid, V)
    ps = project(skel, V)
    dist, _ = cKDTree(ps).query(pc)
    defect = float(dist.max())
    return defect <= 2 * grid_step, defect
