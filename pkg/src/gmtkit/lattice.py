"""Generalized dyadic (Christ–David type) cubes on a point cloud.

Construction: nested greedy nets. Level 0 is the whole cloud. Level k keeps
all level-(k-1) centers and adds, in point-index order, every "interior"
point (its c0*ell_k ball meets no other parent) that is (1-c0)*ell_k-far from
the centers already chosen inside the same parent; a second pass covers the
remaining boundary points (most interior first). Points join the nearest
center inside their own parent (ties -> lowest center index), so nesting and
Q within B(x_Q, ell) hold by construction; the inner-ball constant is measured.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .setgen import PointCloud, diameter


@dataclass
class CDCube:
    id: int
    level: int
    center_index: int
    center: np.ndarray
    ell: float
    members: np.ndarray
    parent: int
    children: list = field(default_factory=list)

    @property
    def radius(self) -> float:
        return self.ell


@dataclass
class Level:
    centers: np.ndarray   # point indices of cube centers (local cube order)
    labels: np.ndarray    # point -> local cube index
    parent: np.ndarray    # local cube index -> local index at level-1 (-1 at root)
    members: list         # local cube index -> sorted point indices
    radius: np.ndarray    # max member distance to center
    offset: int           # global id of local cube 0


class CDLattice:
    def __init__(self, cloud: PointCloud, rho: float, c0: float, depth: int, levels: list,
                 diam: float):
        self.cloud = cloud
        self.points = cloud.points
        self.rho = float(rho)
        self.c0 = float(c0)
        self.depth = int(depth)
        self.levels = levels
        self.diam = float(diam)
        self.tree = cKDTree(cloud.points)
        self._nbrs: dict[int, list] = {}
        self._children = None

    # -- scales
    def ell(self, k: int) -> float:
        """ell_k = 5 rho^k * (diam/5) = rho^k diam."""
        return self.rho ** k * self.diam

    @property
    def n_cubes(self) -> int:
        return sum(len(L.centers) for L in self.levels)

    def level_of(self, cid: int) -> int:
        for k, L in enumerate(self.levels):
            if cid < L.offset + len(L.centers):
                if cid < L.offset:
                    break
                return k
        raise KeyError(f"unknown cube id {cid}")

    def ids(self, k: int) -> np.ndarray:
        L = self.levels[k]
        return np.arange(L.offset, L.offset + len(L.centers))

    def all_ids(self) -> np.ndarray:
        return np.arange(self.n_cubes)

    def cube(self, cid: int) -> CDCube:
        k = self.level_of(cid)
        L = self.levels[k]
        i = cid - L.offset
        par = -1 if k == 0 else int(self.levels[k - 1].offset + L.parent[i])
        ci = int(L.centers[i])
        return CDCube(cid, k, ci, self.points[ci].copy(), self.ell(k), L.members[i], par,
                      self.children(cid))

    def members(self, cid: int) -> np.ndarray:
        k = self.level_of(cid)
        L = self.levels[k]
        return L.members[cid - L.offset]

    def center(self, cid: int) -> np.ndarray:
        k = self.level_of(cid)
        L = self.levels[k]
        return self.points[L.centers[cid - L.offset]]

    def centers(self, k: int) -> np.ndarray:
        return self.points[self.levels[k].centers]

    def parent(self, cid: int) -> int:
        k = self.level_of(cid)
        if k == 0:
            return -1
        L = self.levels[k]
        return int(self.levels[k - 1].offset + L.parent[cid - L.offset])

    def parents(self, k: int) -> np.ndarray:
        """Global parent ids of all level-k cubes."""
        if k == 0:
            return np.full(len(self.levels[0].centers), -1)
        return self.levels[k - 1].offset + self.levels[k].parent

    def children(self, cid: int) -> list:
        if self._children is None:
            ch = [[] for _ in range(self.n_cubes)]
            for k in range(1, len(self.levels)):
                for i, p in enumerate(self.parents(k)):
                    ch[int(p)].append(int(self.levels[k].offset + i))
            self._children = ch
        return self._children[cid]

    def label_of_point(self, k: int) -> np.ndarray:
        """Global cube id of every point at level k."""
        L = self.levels[k]
        return L.offset + L.labels

    def ancestor(self, cid: int, k: int) -> int:
        while self.level_of(cid) > k:
            cid = self.parent(cid)
        return cid

    def descendants(self, cid: int, max_level: int | None = None) -> list:
        out, stack = [], [cid]
        while stack:
            c = stack.pop()
            out.append(c)
            if max_level is None or self.level_of(c) < max_level:
                stack.extend(self.children(c))
        return sorted(out)

    # -- neighbours
    def neighbors(self, cid: int) -> list:
        k = self.level_of(cid)
        if k not in self._nbrs:
            self._nbrs[k] = _level_neighbors(self, k)
        return self._nbrs[k][cid - self.levels[k].offset]

    def neighbor_cardinality(self) -> int:
        """c_n: max over cubes of #children + #neighbours."""
        best = 0
        for cid in range(self.n_cubes):
            best = max(best, len(self.children(cid)) + len(self.neighbors(cid)))
        return best

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.cloud.n
        w.writerow(["cube_id", "level", "parent_id"] + [f"center{i}" for i in range(n)]
                   + ["ell", "member_count"])
        for k in range(len(self.levels)):
            L = self.levels[k]
            par = self.parents(k)
            for i in range(len(L.centers)):
                c = self.points[L.centers[i]]
                w.writerow([L.offset + i, k, int(par[i])] + [repr(float(v)) for v in c]
                           + [repr(self.ell(k)), len(L.members[i])])
        return buf.getvalue()


def _groups(labels: np.ndarray, m: int) -> list:
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(m + 1))
    return [order[bounds[i]:bounds[i + 1]] for i in range(m)]


def _level_neighbors(lat: CDLattice, k: int) -> list:
    """Same-level cubes P with dist(P, Q) <= ell_k (Q itself included)."""
    L = lat.levels[k]
    m = len(L.centers)
    ell = lat.ell(k)
    pts = lat.points
    cen = pts[L.centers]
    out = [[L.offset + i] for i in range(m)]
    if m == 1:
        return out
    ctree = cKDTree(cen)
    rmax = float(L.radius.max())
    trees = {}
    for i in range(m):
        cand = ctree.query_ball_point(cen[i], L.radius[i] + rmax + ell * (1 + 1e-12))
        for j in sorted(cand):
            if j <= i:
                continue
            if np.linalg.norm(cen[i] - cen[j]) > L.radius[i] + L.radius[j] + ell * (1 + 1e-12):
                continue
            a, b = (i, j) if len(L.members[i]) >= len(L.members[j]) else (j, i)
            if a not in trees:
                trees[a] = cKDTree(pts[L.members[a]])
            dist, _ = trees[a].query(pts[L.members[b]], k=1)
            if dist.min() <= ell * (1 + 1e-12):
                out[i].append(L.offset + j)
                out[j].append(L.offset + i)
    return [sorted(o) for o in out]


def _assign(pts, centers, cparent, point_parent) -> np.ndarray:
    """Nearest center with the same parent as the point; ties -> lowest center index."""
    m = len(centers)
    cen = pts[centers]
    tree = cKDTree(cen)
    kq = min(m, 16)
    dist, idx = tree.query(pts, k=kq)
    dist = np.atleast_2d(dist.reshape(len(pts), -1))
    idx = np.atleast_2d(idx.reshape(len(pts), -1))
    ok = cparent[idx] == point_parent[:, None]
    d_ok = np.where(ok, dist, np.inf)
    best = d_ok.min(axis=1)
    labels = np.full(len(pts), -1, dtype=np.int64)
    # exact tie handling: among same-parent candidates at the minimal distance
    # (recomputed exactly), choose the lowest center index
    found = np.isfinite(best)
    for i in np.flatnonzero(found):
        cand = idx[i][ok[i]]
        d2 = ((cen[cand] - pts[i]) ** 2).sum(axis=1)
        sel = cand[d2 == d2.min()]
        labels[i] = int(sel.min())
    # candidate list exhausted (only when parents interleave heavily)
    for i in np.flatnonzero(~found):
        cand = np.flatnonzero(cparent == point_parent[i])
        d2 = ((cen[cand] - pts[i]) ** 2).sum(axis=1)
        labels[i] = int(cand[d2 == d2.min()].min())
    return labels


def build_lattice(cloud: PointCloud, rho: float = 0.5, c0: float | None = None,
                  depth: int = 4) -> CDLattice:
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    if not 0 < rho <= 0.5:
        raise ValueError("rho must lie in (0, 1/2]")
    if c0 is None:
        c0 = rho / 6.0
    if not 0 < c0 <= rho / 3.0 + 1e-15:
        raise ValueError("c0 must lie in (0, rho/3]")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    pts = cloud.points
    npts = len(pts)
    diam = diameter(pts)
    if npts == 1:
        diam = cloud.resolution
    elif rho ** depth * diam < cloud.resolution * (1 - 1e-9):
        raise ValueError("depth too fine for the net resolution: rho^K * diam < resolution")
    tree = cKDTree(pts)

    mid = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    d2 = ((pts - mid) ** 2).sum(axis=1)
    root = int(np.flatnonzero(d2 == d2.min())[0])
    labels = np.zeros(npts, dtype=np.int64)
    centers = np.array([root], dtype=np.int64)
    levels = [Level(centers, labels, np.array([-1]), [np.arange(npts)],
                    np.array([float(np.sqrt(((pts - pts[root]) ** 2).sum(1)).max())]), 0)]
    offset = 1
    for k in range(1, depth + 1):
        ell = rho ** k * diam
        prev = levels[-1]
        plab = prev.labels
        # distance to the nearest point of another parent, capped at c0*ell
        foreign = np.full(npts, c0 * ell)
        if len(prev.centers) > 1:
            pairs = tree.query_pairs(c0 * ell, output_type="ndarray")
            if len(pairs):
                bad = plab[pairs[:, 0]] != plab[pairs[:, 1]]
                pb = pairs[bad]
                dd = np.sqrt(((pts[pb[:, 0]] - pts[pb[:, 1]]) ** 2).sum(1))
                np.minimum.at(foreign, pb[:, 0], dd)
                np.minimum.at(foreign, pb[:, 1], dd)
        interior = foreign >= c0 * ell
        # per-parent coverage: push parent groups far apart along an extra axis
        lifted = np.column_stack([pts, plab * (10.0 * diam + 1.0)])
        sep = (1.0 - c0) * ell
        centers = _kernels.greedy_net(lifted, interior, prev.centers, sep)
        # second pass: boundary points left uncovered become centers, most
        # interior first (this is where the effective c0 can drop below c0)
        perm = np.lexsort((np.arange(npts), -foreign))
        inv = np.empty(npts, dtype=np.int64)
        inv[perm] = np.arange(npts)
        centers = perm[_kernels.greedy_net(lifted[perm], np.ones(npts, dtype=bool),
                                           inv[np.asarray(centers, dtype=np.int64)],
                                           ell * (1 - 1e-12))]
        centers = np.asarray(centers, dtype=np.int64)
        cparent = plab[centers]
        labels = _assign(pts, centers, cparent, plab)
        m = len(centers)
        members = _groups(labels, m)
        radius = np.array([float(np.sqrt(((pts[mem] - pts[c]) ** 2).sum(1)).max())
                           for mem, c in zip(members, centers)])
        levels.append(Level(centers, labels, cparent, members, radius, offset))
        offset += m
    return CDLattice(cloud, rho, c0, depth, levels, diam)


def ball_members(lattice: CDLattice, center, r: float) -> np.ndarray:
    idx = lattice.tree.query_ball_point(np.asarray(center, dtype=np.float64), float(r))
    return np.asarray(sorted(idx), dtype=np.int64)


def neighbors(lattice: CDLattice, cid: int) -> list:
    lattice.level_of(cid)
    return lattice.neighbors(cid)


def verify_lattice(lat: CDLattice) -> dict:
    """Exhaustive check of partition, nesting, ball containment and centers."""
    pts = lat.points
    npts = len(pts)
    rep = {"partition": True, "nesting": True, "center_in_cube": True,
           "outer_factor": 0.0, "inner_factor": np.inf, "chain_2B": True}
    for k, L in enumerate(lat.levels):
        cnt = np.zeros(npts, dtype=np.int64)
        for mem in L.members:
            cnt[mem] += 1
        if not np.all(cnt == 1):
            rep["partition"] = False
        if k > 0:
            prevlab = lat.levels[k - 1].labels
            if not np.all(prevlab == L.parent[L.labels]):
                rep["nesting"] = False
        ell = lat.ell(k)
        for i, (mem, c) in enumerate(zip(L.members, L.centers)):
            if L.labels[c] != i:
                rep["center_in_cube"] = False
            rep["outer_factor"] = max(rep["outer_factor"], L.radius[i] / ell)
            if len(L.members) > 1:
                # distance from the center to the nearest non-member
                dd, ii = lat.tree.query(pts[c], k=min(npts, len(mem) + 1))
                dd, ii = np.atleast_1d(dd), np.atleast_1d(ii)
                foreign = L.labels[ii] != i
                if foreign.any():
                    rep["inner_factor"] = min(rep["inner_factor"], float(dd[foreign][0]) / ell)
        if k > 0:
            par = L.parent
            pc = pts[lat.levels[k - 1].centers[par]]
            gap = np.sqrt(((pts[L.centers] - pc) ** 2).sum(1)) + 2 * ell
            if np.any(gap > 2 * lat.ell(k - 1) * (1 + 1e-12)):
                rep["chain_2B"] = False
    rep["c0"] = lat.c0
    rep["inner_ok"] = bool(rep["inner_factor"] >= lat.c0 * (1 - 1e-12))
    rep["outer_ok"] = bool(rep["outer_factor"] <= 1 + 1e-12)
    rep["counts"] = [len(L.centers) for L in lat.levels]
    return rep
