"""Test-set generators, point-cloud I/O, dyadic cubes, skeletons and dyadic content."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels


@dataclass
class PointCloud:
    """Finite net of a compact set E in [0,1]^n, tagged with its resolution.

    ``curve`` marks clouds whose points are consecutive vertices of a polyline
    (``closed`` if the last vertex connects back to the first); this is the
    "known parametrization" used for arclength. It is not serialized.
    """
    n: int
    d: int
    resolution: float
    points: np.ndarray
    curve: bool = False
    closed: bool = False
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or (pts.size and pts.shape[1] != self.n):
            pts = pts.reshape(-1, self.n)
        self.points = pts
        if pts.size and (pts.min() < -1e-12 or pts.max() > 1 + 1e-12):
            raise ValueError("points must lie in [0,1]^n")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")

    def __len__(self):
        return self.points.shape[0]

    @property
    def diam(self) -> float:
        return diameter(self.points)

    def subset(self, mask_or_idx, label: str = "") -> "PointCloud":
        pts = self.points[mask_or_idx]
        return PointCloud(self.n, self.d, self.resolution, pts, curve=self.curve,
                          closed=False, label=label or self.label)

    def scaled(self, lam: float) -> "PointCloud":
        """lam * E (lam <= 1 keeps the cloud inside the unit cube)."""
        return PointCloud(self.n, self.d, self.resolution * lam, self.points * lam,
                          curve=self.curve, closed=self.closed, label=self.label)

    def arclength(self, mask=None) -> float:
        """Polyline length restricted to consecutive vertex pairs both in ``mask``."""
        if not self.curve:
            raise ValueError("cloud carries no curve parametrization")
        pts = self.points
        keep = np.ones(len(pts), bool) if mask is None else np.asarray(mask, bool)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        both = keep[:-1] & keep[1:]
        total = float(seg[both].sum())
        if self.closed and keep[0] and keep[-1]:
            total += float(np.linalg.norm(pts[0] - pts[-1]))
        return total

    # -- serialization (bit-exact JSON: keys n, d, resolution, points)
    def to_json(self) -> str:
        return json.dumps({"n": int(self.n), "d": int(self.d),
                           "resolution": float(self.resolution),
                           "points": [[float(v) for v in p] for p in self.points]})

    @classmethod
    def from_json(cls, text: str) -> "PointCloud":
        obj = json.loads(text)
        pts = np.asarray(obj["points"], dtype=np.float64).reshape(-1, int(obj["n"]))
        _check_distinct(pts)
        return cls(int(obj["n"]), int(obj["d"]), float(obj["resolution"]), pts)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(self.n)])
        for p in self.points:
            w.writerow([repr(float(v)) for v in p])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, d: int, resolution: float) -> "PointCloud":
        rows = list(csv.reader(io.StringIO(text)))
        header = rows[0]
        n = len(header)
        if header != [f"x{i}" for i in range(n)]:
            raise ValueError("CSV header must be x0,...,x{n-1}")
        pts = np.asarray([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
        pts = pts.reshape(-1, n)
        _check_distinct(pts)
        return cls(n, d, resolution, pts)


def _check_distinct(pts: np.ndarray):
    if len(np.unique(pts, axis=0)) != len(pts):
        raise ValueError("points must be pairwise distinct")


def diameter(pts: np.ndarray) -> float:
    pts = np.atleast_2d(pts)
    if len(pts) < 2:
        return 0.0
    if len(pts) > 64:
        from scipy.spatial import ConvexHull, QhullError
        try:
            pts = pts[ConvexHull(pts).vertices]
        except (QhullError, ValueError):
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            # degenerate hull: extreme points along the longest axis suffice
            ax = int(np.argmax(hi - lo))
            pts = pts[[int(np.argmin(pts[:, ax])), int(np.argmax(pts[:, ax]))]]
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def dyadic_ceil(x: float) -> float:
    """Smallest power of 1/2 (or 2) that is >= x."""
    return 2.0 ** math.ceil(math.log2(x) - 1e-12)


def dyadic_floor(x: float) -> float:
    return 2.0 ** math.floor(math.log2(x) + 1e-12)


# ---------------------------------------------------------------- generators

def four_corner_cantor(depth: int, eta: float = 1.0) -> PointCloud:
    """Centers of the 4^(depth+1) squares of generation depth+1.

    Each square of side s keeps four corner sub-squares of side eta*s/4
    (eta = 1 is the classical 4-corner set; eta in [1, 2) dilates them).
    The net resolution is contraction^depth rounded up to a power of 1/2.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if not 1.0 <= eta < 2.0:
        raise ValueError("eta must lie in [1, 2)")
    r = eta / 4.0
    centers = np.array([[0.5, 0.5]])
    side = 1.0
    corners = np.array([[-1, -1], [1, -1], [-1, 1], [1, 1]], dtype=np.float64)
    for _ in range(depth + 1):
        child = side * r
        off = 0.5 * (side - child)
        centers = (centers[:, None, :] + off * corners[None, :, :]).reshape(-1, 2)
        side = child
    res = dyadic_ceil(r ** depth) if depth > 0 else 1.0
    return PointCloud(2, 1, res, centers, label=f"cantor(depth={depth},eta={eta})",
                      meta={"contraction": r, "square_side": side})


def koch(depth: int) -> PointCloud:
    """Vertices of the depth-th Koch polyline from (0,0) to (1,0); 4^depth + 1 points."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    c, s = 0.5, math.sqrt(3) / 2
    for _ in range(depth):
        a, b = pts[:-1], pts[1:]
        v = (b - a) / 3.0
        p1 = a + v
        p3 = a + 2 * v
        p2 = p1 + np.column_stack([c * v[:, 0] - s * v[:, 1], s * v[:, 0] + c * v[:, 1]])
        seg = np.stack([a, p1, p2, p3], axis=1).reshape(-1, 2)
        pts = np.vstack([seg, pts[-1:]])
    pts = np.clip(pts, 0.0, 1.0)
    return PointCloud(2, 1, dyadic_floor(3.0 ** -depth), pts, curve=True,
                      label=f"koch({depth})", meta={"contraction": 1 / 3})


def lipschitz_graph(L: float, count: int, seed: int = 0, pieces: int = 8) -> PointCloud:
    """Graph of a random piecewise-linear function with slopes in [-L, L].

    The graph is centered vertically at 1/2; for L > 1 the domain shrinks to
    [0, 1/L] so the graph stays inside the unit square.
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    if count < 2:
        raise ValueError("count must be >= 2")
    rng = np.random.default_rng(seed)
    width = 1.0 if L <= 1 else 1.0 / L
    slopes = rng.uniform(-L, L, pieces)
    knots = np.linspace(0.0, width, pieces + 1)
    knot_y = np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])
    x = np.linspace(0.0, width, count)
    y = np.interp(x, knots, knot_y)
    y = y - 0.5 * (knot_y.max() + knot_y.min()) + 0.5
    pts = np.column_stack([x, y])
    step = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).max())
    return PointCloud(2, 1, dyadic_ceil(step), pts, curve=True,
                      label=f"lipschitz_graph(L={L},count={count},seed={seed})",
                      meta={"knots": np.column_stack([knots, knot_y - 0.5 * (knot_y.max() + knot_y.min()) + 0.5])})


def segment(count: int, length: float = 1.0) -> PointCloud:
    """Horizontal segment [0, length] x {0} sampled by ``count`` points."""
    if count < 2:
        raise ValueError("count must be >= 2")
    if not 0 < length <= 1:
        raise ValueError("length must be in (0, 1]")
    x = np.linspace(0.0, length, count)
    pts = np.column_stack([x, np.zeros(count)])
    return PointCloud(2, 1, dyadic_ceil(length / (count - 1)), pts, curve=True,
                      label=f"segment({count})")


def circle(count: int, radius: float = 0.5) -> PointCloud:
    """Circle of the given radius centered at (1/2, 1/2)."""
    if count < 3:
        raise ValueError("count must be >= 3")
    if not 0 < radius <= 0.5:
        raise ValueError("radius must be in (0, 1/2]")
    t = 2 * np.pi * np.arange(count) / count
    pts = 0.5 + radius * np.column_stack([np.cos(t), np.sin(t)])
    pts = np.clip(pts, 0.0, 1.0)
    return PointCloud(2, 1, dyadic_ceil(2 * np.pi * radius / count), pts, curve=True,
                      closed=True, label=f"circle({count},r={radius})")


def disk_grid(step: float) -> PointCloud:
    """Grid points of spacing ``step`` inside the disk of radius 1/2 at (1/2, 1/2)."""
    if not 0 < step < 0.5:
        raise ValueError("step must be in (0, 1/2)")
    g = np.arange(0.0, 1.0 + 1e-12, step)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    pts = pts[((pts - 0.5) ** 2).sum(1) <= 0.25 + 1e-12]
    return PointCloud(2, 2, dyadic_ceil(step), pts, label=f"disk_grid({step})")


def square_grid(step: float, n: int = 2) -> PointCloud:
    """Full grid of the unit cube [0,1]^n with the given spacing (d = n)."""
    g = np.arange(0.0, 1.0 + 1e-12, step)
    g = g[g <= 1.0]
    pts = np.array(list(itertools.product(g, repeat=n)), dtype=np.float64)
    return PointCloud(n, n, dyadic_ceil(step), pts, label=f"square_grid({step})")


def planar_patch(nx: int = 16, ny: int | None = None, height: float = 0.5) -> PointCloud:
    """nx-by-ny grid on the flat square [0,1]^2 x {height} in R^3 (d = 2)."""
    ny = nx if ny is None else ny
    if nx < 2 or ny < 2:
        raise ValueError("need at least 2 grid points per side")
    xx, yy = np.meshgrid(np.linspace(0, 1, nx), np.linspace(0, 1, ny), indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, height)])
    step = 1.0 / (min(nx, ny) - 1)
    return PointCloud(3, 2, dyadic_ceil(step), pts, label=f"planar_patch({nx}x{ny})")


def square_boundary(count: int, side: float = 1.0) -> PointCloud:
    """Boundary of the square [0, side]^2, ``count`` points per edge (closed curve)."""
    if count < 2:
        raise ValueError("count must be >= 2")
    t = np.linspace(0.0, side, count)[:-1]
    z = np.zeros_like(t)
    s = np.full_like(t, side)
    pts = np.vstack([np.column_stack([t, z]), np.column_stack([s, t]),
                     np.column_stack([side - t, s]), np.column_stack([z, side - t])])
    return PointCloud(2, 1, dyadic_ceil(side / (count - 1)), pts, curve=True, closed=True,
                      label=f"square_boundary({count})")


FAMILIES = {
    "four_corner_cantor": four_corner_cantor,
    "cantor": four_corner_cantor,
    "koch": koch,
    "lipschitz_graph": lipschitz_graph,
    "segment": segment,
    "circle": circle,
    "disk_grid": disk_grid,
    "square_grid": square_grid,
    "planar_patch": planar_patch,
    "square_boundary": square_boundary,
}


def generate(family: str, **params) -> PointCloud:
    try:
        fn = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}") from None
    return fn(**params)


# ---------------------------------------------------------------- dyadic cubes

@dataclass(frozen=True)
class DyadicCube:
    """Half-open cube prod [k_i 2^-j, (k_i+1) 2^-j)."""
    level: int
    index: tuple

    @property
    def side(self) -> float:
        return 2.0 ** -self.level

    @property
    def corner(self) -> np.ndarray:
        return np.asarray(self.index, dtype=np.float64) * self.side

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all(cell_index(pts, self.level) == np.asarray(self.index), axis=1)


def cell_index(pts, level: int) -> np.ndarray:
    """Integer cell indices at dyadic ``level`` (points at the top face of [0,1]
    are put in the last cell)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    k = np.floor(pts * (2.0 ** level)).astype(np.int64)
    return np.minimum(k, (1 << level) - 1) if level >= 0 else k


def level_of_side(side: float) -> int:
    """The integer j with 2^-j <= side < 2^(-j+1)."""
    return int(math.floor(-math.log2(side) + 1e-12)) if side > 0 else 0


def cover_level(k: int, rho: float, scale: float) -> int:
    """Dyadic level matching lattice level k: 2^-j <= ell_k < 2^(-j+1),
    where ell_k = 5 rho^k * scale (scale = diam/5 gives ell_0 = diam)."""
    return level_of_side(5 * rho ** k * scale)


def resolution_level(resolution: float) -> int:
    """Finest dyadic level whose cubes are no smaller than the net resolution."""
    return level_of_side(resolution)


def dyadic_cover(cloud: PointCloud, k: int, rho: float = 0.5, scale: float | None = None,
                 level: int | None = None) -> list[DyadicCube]:
    """Dyadic cubes of level j(k) meeting the cloud."""
    if level is None:
        if scale is None:
            scale = max(cloud.diam, cloud.resolution) / 5.0
        level = cover_level(k, rho, scale)
    if 2.0 ** -level < cloud.resolution * (1 - 1e-12):
        raise ValueError("cover level finer than the net resolution")
    idx = np.unique(cell_index(cloud.points, level), axis=0)
    return [DyadicCube(level, tuple(int(v) for v in row)) for row in idx]


def cube_faces(cube: DyadicCube, d: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """d-dimensional faces as (corner, list of free axes)."""
    n = len(cube.index)
    if not 0 <= d < n:
        raise ValueError("skeleton dimension must satisfy d < n")
    out = []
    corner = cube.corner
    s = cube.side
    for free in itertools.combinations(range(n), d):
        fixed = [i for i in range(n) if i not in free]
        for bits in itertools.product((0, 1), repeat=len(fixed)):
            c = corner.copy()
            for ax, b in zip(fixed, bits):
                c[ax] += b * s
            out.append((c, np.asarray(free, dtype=np.int64)))
    return out


def face_key(corner: np.ndarray, free: np.ndarray, level: int) -> tuple:
    """Hashable identity of a face (integer grid coordinates)."""
    g = tuple(int(round(v * 2.0 ** level)) for v in corner)
    return (level, g, tuple(int(a) for a in free))


def sample_face(corner: np.ndarray, free: np.ndarray, side: float, per_side: int,
                centers: bool = False) -> np.ndarray:
    """Grid samples of a face. ``centers`` gives per_side^d cell midpoints,
    otherwise (per_side+1)^d grid nodes including the boundary."""
    d = len(free)
    if d == 0:
        return corner[None, :].copy()
    if centers:
        t = (np.arange(per_side) + 0.5) / per_side * side
    else:
        t = np.linspace(0.0, side, per_side + 1)
    grids = np.meshgrid(*([t] * d), indexing="ij")
    out = np.repeat(corner[None, :], grids[0].size, axis=0)
    for a, g in zip(free, grids):
        out[:, a] += g.ravel()
    return out


def skeleton_points(cubes, d: int, sample_step: float) -> np.ndarray:
    faces = {}
    for cube in cubes:
        for c, free in cube_faces(cube, d):
            faces.setdefault(face_key(c, free, cube.level), (c, free, cube.side))
    chunks = []
    for c, free, s in faces.values():
        m = max(1, int(math.ceil(s / sample_step - 1e-9)))
        chunks.append(sample_face(c, free, s, m))
    if not chunks:
        return np.zeros((0, len(cubes[0].index) if cubes else 0))
    pts = np.unique(np.round(np.vstack(chunks), 15), axis=0)
    return pts


def skeleton_set(cloud: PointCloud, k: int, d: int, sample_step: float, rho: float = 0.5,
                 scale: float | None = None, level: int | None = None) -> PointCloud:
    """Sampled union of the d-skeletons of the cover cubes."""
    if not 0 < d < cloud.n:
        raise ValueError("skeleton dimension must satisfy 0 < d < n")
    cubes = dyadic_cover(cloud, k, rho=rho, scale=scale, level=level)
    pts = skeleton_points(cubes, d, sample_step)
    pts = np.clip(pts, 0.0, 1.0)
    return PointCloud(cloud.n, d, dyadic_ceil(sample_step), pts,
                      label=f"skeleton({cloud.label},k={k},d={d})")


# ---------------------------------------------------------------- content

def dyadic_frame_level(pts: np.ndarray) -> int:
    """Level m of the smallest cube [0, 2^-m]^n (m >= 0) containing the points.

    Anchoring the dyadic tree to this cube makes the content exactly
    covariant under x -> x/2.
    """
    top = float(np.max(pts)) if len(pts) else 1.0
    if top <= 0:
        return 0
    return max(0, int(math.floor(-math.log2(top) + 1e-12)))


def frame_cell_index(pts: np.ndarray, level: int, frame_level: int) -> np.ndarray:
    """Cell indices at ``level`` with points on the frame's top face clamped inside."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    k = np.floor(pts * (2.0 ** level)).astype(np.int64)
    return np.minimum(k, (1 << (level - frame_level)) - 1)


def cap_value(n: int, d: float, level: int) -> float:
    """diam^d of a level cube, computed as n^(d/2) 2^(-level d) (exact for d = n = 2)."""
    return float(n ** (d / 2.0)) * 2.0 ** (-level * d)


def dyadic_content(cloud_or_points, d: float, finest_level: int | None = None,
                   restrict_to=None, frame_level: int | None = None) -> float:
    """Dyadic Hausdorff content by the bottom-up dynamic program

    content(I) = min(diam(I)^d, sum over occupied children of content(child)),
    with occupied leaves (level ``finest_level``) valued diam^d.
    """
    if isinstance(cloud_or_points, PointCloud):
        pts = cloud_or_points.points
        if finest_level is None:
            finest_level = resolution_level(cloud_or_points.resolution)
        elif 2.0 ** -finest_level < cloud_or_points.resolution * (1 - 1e-12):
            raise ValueError("finest level below the net resolution")
    else:
        pts = np.atleast_2d(np.asarray(cloud_or_points, dtype=np.float64))
        if finest_level is None:
            raise ValueError("finest_level required for raw points")
    if finest_level < 0:
        raise ValueError("finest_level must be >= 0")
    if restrict_to is not None:
        mask = restrict_to(pts) if callable(restrict_to) else np.asarray(restrict_to)
        pts = pts[mask]
    if len(pts) == 0:
        return 0.0
    labels = np.zeros(len(pts), dtype=np.int64)
    return float(grouped_content(pts, labels, 1, d, finest_level, frame_level)[0])


def grouped_content(pts: np.ndarray, labels: np.ndarray, n_groups: int, d: float,
                    finest_level: int, frame_level: int | None = None) -> np.ndarray:
    """Dyadic content of every group {pts[labels == g]} at once (vectorized DP)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    n = pts.shape[1]
    out = np.zeros(n_groups)
    if len(pts) == 0:
        return out
    if frame_level is None:
        frame_level = dyadic_frame_level(pts)
    finest_level = max(finest_level, frame_level)
    idx = frame_cell_index(pts, finest_level, frame_level)
    keys = np.column_stack([labels.astype(np.int64), idx])
    keys, inv = np.unique(keys, axis=0, return_inverse=True)
    vals = np.full(len(keys), cap_value(n, d, finest_level))
    for level in range(finest_level - 1, frame_level - 1, -1):
        parent = keys.copy()
        parent[:, 1:] >>= 1
        pkeys, pinv = np.unique(parent, axis=0, return_inverse=True)
        sums = np.bincount(pinv.ravel(), weights=vals, minlength=len(pkeys))
        vals = np.minimum(sums, cap_value(n, d, level))
        keys = pkeys
    np.add.at(out, keys[:, 0], vals)
    return out


class ContentTree:
    """Dyadic tree over a fixed point set, for contents of many subsets.

    ``prefix(order)`` returns the content of {pts[order[:i+1]]} for every i
    using the incremental kernel.
    """

    def __init__(self, pts, d: float, finest_level: int, frame_level: int | None = None):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        self.n_points = len(pts)
        n = pts.shape[1]
        if frame_level is None:
            frame_level = dyadic_frame_level(pts)
        finest_level = max(finest_level, frame_level)
        caps = []
        offset = 0
        idx = frame_cell_index(pts, finest_level, frame_level)
        level_nodes = []
        for level in range(finest_level, frame_level - 1, -1):
            keys, inv = np.unique(idx, axis=0, return_inverse=True)
            level_nodes.append((keys, inv.ravel(), offset))
            caps.append(np.full(len(keys), cap_value(n, d, level)))
            offset += len(keys)
            idx = keys >> 1
        # virtual uncapped super-root above the frame cells (points outside the
        # frame cube give several top cells; their contents add up)
        parent = np.full(offset + 1, offset, dtype=np.int64)
        parent[offset] = -1
        caps.append(np.array([np.inf]))
        for (keys, inv, off), (nkeys, ninv, noff) in zip(level_nodes[:-1], level_nodes[1:]):
            # node at this level -> node at next coarser level
            parent[off:off + len(keys)] = noff + ninv
        first_keys, first_inv, _ = level_nodes[0]
        self.leaf = first_inv.astype(np.int64)
        self.parent = parent
        self.cap = np.concatenate(caps)

    def prefix(self, order) -> np.ndarray:
        order = np.asarray(order, dtype=np.int64)
        return _kernels.prefix_content(self.leaf[order], self.parent, self.cap)

    def content(self, mask=None) -> float:
        order = np.arange(self.n_points) if mask is None else np.flatnonzero(mask)
        if len(order) == 0:
            return 0.0
        return float(self.prefix(order)[-1])
