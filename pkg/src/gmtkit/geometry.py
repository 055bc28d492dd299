"""Affine planes, projections, Grassmannian sampling and plane fitting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, QhullError

ORTHO_TOL = 1e-12


def _check_frame(frame: np.ndarray, n: int | None = None) -> np.ndarray:
    frame = np.atleast_2d(np.asarray(frame, dtype=np.float64))
    d, dim = frame.shape
    if n is not None and dim != n:
        raise ValueError(f"frame lives in R^{dim}, expected R^{n}")
    if not 1 <= d < dim:
        raise ValueError(f"need 1 <= d < n, got d={d}, n={dim}")
    gram = frame @ frame.T
    if np.abs(gram - np.eye(d)).max() > ORTHO_TOL * 10:
        raise ValueError("frame is not orthonormal")
    return frame


def orthonormalize(vectors) -> np.ndarray:
    """Rows -> orthonormal rows spanning the same space (QR, sign-fixed)."""
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    q, r = np.linalg.qr(v.T)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return (q * signs).T


def complement(frame) -> np.ndarray:
    """Orthonormal basis (rows) of the orthogonal complement of span(frame)."""
    frame = np.atleast_2d(np.asarray(frame, dtype=np.float64))
    d, n = frame.shape
    u, _, _ = np.linalg.svd(frame.T, full_matrices=True)
    return u[:, d:].T.copy()


@dataclass(frozen=True)
class GrassmannPoint:
    """Linear d-subspace of R^n given by an orthonormal frame (rows)."""
    frame: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "frame", _check_frame(self.frame))

    @property
    def d(self) -> int:
        return self.frame.shape[0]

    @property
    def n(self) -> int:
        return self.frame.shape[1]

    def projector(self) -> np.ndarray:
        return self.frame.T @ self.frame


@dataclass(frozen=True)
class AffinePlane:
    """base + span(frame); frame rows orthonormal."""
    base: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=np.float64).reshape(-1)
        frame = _check_frame(self.frame, base.shape[0])
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "frame", frame)

    @property
    def d(self) -> int:
        return self.frame.shape[0]

    @property
    def n(self) -> int:
        return self.frame.shape[1]

    @property
    def direction(self) -> GrassmannPoint:
        return GrassmannPoint(self.frame)

    def distances(self, points) -> np.ndarray:
        return plane_distances(points, self)

    def scaled(self, lam: float) -> "AffinePlane":
        return AffinePlane(self.base * lam, self.frame)


def grassmann_distance(V: GrassmannPoint, W: GrassmannPoint) -> float:
    """Operator norm of the difference of the orthogonal projectors."""
    if V.n != W.n or V.d != W.d:
        raise ValueError("dimension mismatch")
    return float(np.linalg.norm(V.projector() - W.projector(), 2))


def project(points, V) -> np.ndarray:
    """Frame coordinates of the orthogonal projection onto V (linear or affine)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if isinstance(V, AffinePlane):
        return (pts - V.base) @ V.frame.T
    return pts @ V.frame.T


def plane_distances(points, plane: AffinePlane) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    rel = pts - plane.base
    along = rel @ plane.frame.T
    perp = rel - along @ plane.frame
    return np.sqrt((perp * perp).sum(axis=1))


# ---------------------------------------------------------------- sampling

def line_frame(angle: float) -> np.ndarray:
    return np.array([[np.cos(angle), np.sin(angle)]])


def fibonacci_hemisphere(count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors with z >= 0 (antipodes identified)."""
    i = np.arange(count) + 0.5
    z = 1.0 - i / count  # (0, 1]
    phi = np.pi * (1.0 + 5 ** 0.5) * i
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def grassmann_samples(n: int, d: int, count: int, seed: int = 0) -> list[GrassmannPoint]:
    """Deterministic grids for n=2,3; seeded Haar-style sampling otherwise."""
    if not 1 <= d < n:
        raise ValueError("need 1 <= d < n")
    if n == 2:
        ang = (np.arange(count) + 0.5) * np.pi / count
        return [GrassmannPoint(line_frame(a)) for a in ang]
    if n == 3:
        dirs = fibonacci_hemisphere(count)
        if d == 1:
            return [GrassmannPoint(u[None, :]) for u in dirs]
        return [GrassmannPoint(complement(u[None, :])) for u in dirs]
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        g = rng.standard_normal((n, n))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))
        out.append(GrassmannPoint(q[:, :d].T.copy()))
    return out


# ---------------------------------------------------------------- fitting

def fit_plane_l2(points, weights, d: int) -> tuple[AffinePlane, float]:
    """Exact weighted least-squares d-plane (weighted PCA).

    Returns the plane and sum_i w_i dist(x_i, L)^2, which equals the sum of the
    n-d smallest eigenvalues of the weighted second-moment matrix.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    n = pts.shape[1]
    if d >= n or d < 1:
        raise ValueError("need 1 <= d < n")
    if w.shape[0] != pts.shape[0]:
        raise ValueError("weights/points length mismatch")
    if np.any(w < 0):
        raise ValueError("negative weights")
    total = w.sum()
    if not total > 0:
        raise ValueError("zero total weight")
    c = (w @ pts) / total
    x = pts - c
    m = (x * w[:, None]).T @ x
    evals, evecs = np.linalg.eigh(m)
    frame = orthonormalize(evecs[:, ::-1][:, :d].T)
    residual = float(np.clip(evals[: n - d], 0.0, None).sum())
    return AffinePlane(c, frame), residual


def _hull_width_2d(pts: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Minimum width of a planar point set: (width, unit normal, offset of mid line)."""
    try:
        hull = ConvexHull(pts)
        verts = pts[hull.vertices]
    except (QhullError, ValueError):
        verts = None
    if verts is None or len(verts) < 3:
        # degenerate (collinear / tiny): width 0 along the principal direction
        plane, _ = fit_plane_l2(pts, np.ones(len(pts)), 1)
        nrm = complement(plane.frame)[0]
        proj = pts @ nrm
        return float(proj.max() - proj.min()), nrm, float(0.5 * (proj.max() + proj.min()))
    best = (np.inf, None, 0.0)
    k = len(verts)
    for i in range(k):
        e = verts[(i + 1) % k] - verts[i]
        L = np.hypot(e[0], e[1])
        if L == 0:
            continue
        nrm = np.array([-e[1], e[0]]) / L
        proj = verts @ nrm
        w = proj.max() - proj.min()
        if w < best[0]:
            best = (float(w), nrm, float(0.5 * (proj.max() + proj.min())))
    return best


def _sup_dist_for_frame(pts: np.ndarray, frame: np.ndarray, comp: np.ndarray):
    """Best base for a fixed direction: center of the minimal enclosing ball of
    the projections onto the complement (exact for codimension 1)."""
    q = pts @ comp.T  # coordinates in the normal space
    if q.shape[1] == 1:
        lo, hi = q[:, 0].min(), q[:, 0].max()
        center = np.array([0.5 * (lo + hi)])
        return 0.5 * (hi - lo), center
    center = 0.5 * (q.min(axis=0) + q.max(axis=0))
    def f(c):
        return np.sqrt(((q - c) ** 2).sum(axis=1)).max()
    res = minimize(f, center, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 400})
    c = res.x if res.fun <= f(center) else center
    return float(f(c)), c


def fit_plane_minimax(points, d: int, budget: int = 8, seed: int = 0) -> tuple[AffinePlane, float]:
    """Plane (approximately) minimizing sup_i dist(x_i, L).

    Exact for (n, d) = (2, 1) via the minimum-width direction of the convex
    hull. Otherwise: PCA start plus ``budget`` seeded restarts of a local
    search over frame perturbations. The returned sup-distance is always the
    true sup-distance of the returned plane, hence an upper bound on the
    optimum.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] == 0:
        raise ValueError("empty input")
    n = pts.shape[1]
    if not 1 <= d < n:
        raise ValueError("need 1 <= d < n")
    if pts.shape[0] <= d:
        plane = _through_points(pts, d)
        return plane, 0.0
    if n == 2 and d == 1:
        w, nrm, off = _hull_width_2d(pts)
        frame = np.array([[nrm[1], -nrm[0]]])
        base = nrm * off
        plane = AffinePlane(base, frame)
        return plane, float(plane_distances(pts, plane).max())

    start, _ = fit_plane_l2(pts, np.ones(len(pts)), d)
    sup0 = float(plane_distances(pts, start).max())
    scale = float(np.abs(pts - start.base).max()) or 1.0
    if sup0 <= 1e-13 * scale:
        return start, sup0
    shift = start.base
    x = pts - shift
    comp0 = complement(start.frame)
    basis = np.vstack([start.frame, comp0])  # rows: frame then complement

    def frames_from(theta):
        a = np.zeros((n, n))
        a[:d, d:] = theta.reshape(d, n - d)
        a[d:, :d] = -a[:d, d:].T
        # Cayley transform keeps orthogonality exactly
        rot = np.linalg.solve(np.eye(n) - 0.5 * a, np.eye(n) + 0.5 * a)
        b = rot @ basis
        return b[:d], b[d:]

    def objective(theta):
        f, c = frames_from(theta)
        return _sup_dist_for_frame(x, f, c)[0]

    rng = np.random.default_rng(seed)
    npar = d * (n - d)
    starts = [np.zeros(npar)] + [rng.normal(scale=0.3, size=npar) for _ in range(budget)]
    best_val, best_theta = np.inf, np.zeros(npar)
    for th0 in starts:
        res = minimize(objective, th0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 200 * (npar + 1)})
        val = objective(res.x)
        if val < best_val:
            best_val, best_theta = val, res.x
    f, c = frames_from(best_theta)
    sup, center = _sup_dist_for_frame(x, f, c)
    plane = AffinePlane(shift + center @ c, orthonormalize(f))
    return plane, float(plane_distances(pts, plane).max())


def _through_points(pts: np.ndarray, d: int) -> AffinePlane:
    n = pts.shape[1]
    base = pts[0]
    rel = pts[1:] - base
    vecs = [v for v in rel if np.linalg.norm(v) > 0]
    basis = np.eye(n)
    cand = np.vstack(vecs + list(basis)) if vecs else basis
    q, _ = np.linalg.qr(cand.T)
    return AffinePlane(base, orthonormalize(q[:, :d].T))


def random_plane(n: int, d: int, rng, scale: float = 1.0) -> AffinePlane:
    g = rng.standard_normal((d, n))
    return AffinePlane(rng.uniform(-scale, scale, n), orthonormalize(g))
