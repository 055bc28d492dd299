"""The twelve acceptance criteria at their stated tolerances.

Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line (also collected into the
pytest terminal summary). Run directly with ``python tests/test_acceptance.py``.
"""
import math
import time

import numpy as np
import pytest

from gmtkit import setgen
from gmtkit.analysis import (_max_depth, box_dimension, capacity_lower_bound, denjoy_bound,
                             tst_sum, wiggly_dimension)
from gmtkit.beta import beta_measure_lp, beta_spectrum
from gmtkit.corona import (build_corona, build_skeleton_approximant, regularize_tree,
                           verify_corona, verify_skeleton_projection)
from gmtkit.geometry import GrassmannPoint, fit_plane_l2
from gmtkit.lattice import build_lattice
from gmtkit.measure import (build_classical_frostman, build_doubling_frostman,
                            choquet_integral, jensen_constant)
from gmtkit.projections import favard_length
from gmtkit.setgen import DyadicCube, dyadic_content

from oracles import line_l2_grid

RESULTS = []

SEGMENT_CAPACITY = 0.4444444444444442   # golden: segment(257), depth 6, rho 1/2
FLATNESS_C = 0.5                        # recorded constant: flatness <= C mu(E) on PBP sets
FLAT_BASELINE = 1.0                     # TST numerator ell(Q0)^d + beta(Q0) of the unit segment


def report(n, title, ok, detail, t0):
    line = f"ACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'} {title}: {detail} ({time.time() - t0:.1f}s)"
    RESULTS.append(line)
    print(line)
    assert ok, line


def lattice_for(cloud, depth, rho=0.5):
    return build_lattice(cloud, rho=rho, depth=_max_depth(cloud, rho, depth))


# 1 ------------------------------------------------------------------------
def test_01_flat_set_vanishing():
    t0 = time.time()
    worst = 0.0
    for cloud in (setgen.segment(512), setgen.planar_patch(16, 32)):
        lat = lattice_for(cloud, 5)
        mu = build_classical_frostman(lat, cloud.d)
        for flavor, src in (("infty", cloud), ("measure_lp", mu), ("content_lp", cloud)):
            recs = beta_spectrum(src, lat, flavor=flavor, multiplier=3, p=2, d=cloud.d)
            assert len(recs) == lat.n_cubes
            worst = max(worst, max(r.value for r in recs))
    report(1, "flat-set vanishing", worst <= 1e-9, f"max beta = {worst:.2e}", t0)


# 2 ------------------------------------------------------------------------
def test_02_plane_fitter_oracle():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    r = 2.0
    worst = 0.0
    for _ in range(50):
        pts = rng.uniform(-1, 1, (10, 2))
        w = rng.uniform(0.1, 1.0, 10)
        _, res = fit_plane_l2(pts, w, 1)
        ores = line_l2_grid(pts, w)[0]
        b, ob = math.sqrt(res / r ** 3), math.sqrt(ores / r ** 3)
        worst = max(worst, abs(b - ob))
    tri = np.array([(-1, 0), (1, 0), (0, 1)], float)
    bt = beta_measure_lp((tri, np.ones(3)), (0, 0), 2.0, 2, 1).value
    ok = worst <= 1e-6 and abs(bt - math.sqrt(1 / 12)) <= 1e-9
    report(2, "plane-fitter oracle", ok,
           f"max |beta - oracle| = {worst:.1e}, triangle beta = {bt:.12f}", t0)


# 3 ------------------------------------------------------------------------
def test_03_content_engine():
    t0 = time.time()
    sq = setgen.square_grid(1 / 64)
    square_ok = all(dyadic_content(sq, 2, fl) == 2.0 for fl in range(1, 7))
    seg = setgen.segment(1025)
    seg_err = max(abs(dyadic_content(seg, 1, fl) - math.sqrt(2)) for fl in range(1, 11))
    H = dyadic_content(seg, 1, 8)
    cho_err = 0.0
    for c, p in ((1.0, 1.0), (0.3, 2.0), (2.5, 1.5)):
        v = choquet_integral(seg.points, np.full(len(seg), c), p, 1, 8)
        cho_err = max(cho_err, abs(v - H * c ** p / p))
    rng = np.random.default_rng(7)
    C = 0.0
    for _ in range(100):
        pts = rng.uniform(0, 1, (int(rng.integers(5, 40)), 2))
        f = rng.uniform(0, 1, len(pts)) ** rng.uniform(0.5, 3)
        C = max(C, jensen_constant(pts, f, 2.0, 1.0, 6))
    ok = square_ok and seg_err <= 1e-12 and cho_err <= 1e-12 and math.isfinite(C) and C <= 2
    report(3, "content engine", ok, f"square=2 exact: {square_ok}, segment err {seg_err:.1e}, "
           f"Choquet err {cho_err:.1e}, Jensen C = {C:.4f}", t0)


# 4 ------------------------------------------------------------------------
def test_04_doubling_frostman():
    t0 = time.time()
    cases = [(setgen.segment(1025), 7), (setgen.square_boundary(1024), 6),
             (setgen.four_corner_cantor(4, 1), 3)]
    ok = True
    notes = []
    for cloud, K in cases:
        reps = []
        for depth in (K, K + 1):
            lat = build_lattice(cloud, depth=depth)
            fr = build_doubling_frostman(lat, 1)
            r = fr.report
            tot = fr.mu[0].total
            mass_ok = all(abs(m.total - tot) <= 1e-12 * tot for m in fr.mu)
            disj = all(not np.any(a & b) for a, b in zip(fr.rich, fr.poor))
            ok &= mass_ok and disj and r["mass_stays_ok"] and r["density_parent_ok"]
            reps.append(r)
        for key in ("Cdb", "C1", "A"):
            a, b = reps[0][key], reps[1][key]
            ok &= math.isfinite(a) and math.isfinite(b) and 0.5 <= b / a <= 2
        notes.append(f"{cloud.label}: C0={reps[1]['C0']:.0f} C1={reps[1]['C1']:.2f} "
                     f"Cdb={reps[1]['Cdb']:.2f} A={reps[1]['A']:.2f}")
    report(4, "doubling Frostman", ok, "; ".join(notes), t0)


# 5 ------------------------------------------------------------------------
def test_05_corona():
    t0 = time.time()
    ok = True
    notes = []
    for cloud, K in ((setgen.four_corner_cantor(4, 1), 4), (setgen.square_boundary(1024), 7),
                     (setgen.segment(1025), 8)):
        lat = build_lattice(cloud, depth=K)
        fr = build_doubling_frostman(lat, 1)
        rep = verify_corona(build_corona(lat, fr.mu, tau=0.1))
        ok &= rep["trees_partition"] and rep["stop_disjoint_cover"]
        ok &= rep["sandwich_lower"] > 0 and math.isfinite(rep["sandwich_upper"])
        ok &= rep["decay_ok"] and rep["packing_ok"]
        notes.append(f"{cloud.label}: sandwich C={rep['sandwich_C']:.2f}, "
                     f"packing {rep['packing_sum']:.3f} <= {rep['packing_bound']:.3f}, "
                     f"{rep['generations']} generations")
    report(5, "corona", ok, "; ".join(notes), t0)


# 6 ------------------------------------------------------------------------
def test_06_skeleton_projection():
    t0 = time.time()
    rng = np.random.default_rng(6)
    combos = [(2, 1), (3, 1), (3, 2)]
    bad = 0
    worst = 0.0
    for i in range(1000):
        n, d = combos[i % 3]
        q = np.linalg.qr(rng.standard_normal((n, n)))[0]      # Haar-random frame
        V = GrassmannPoint(q[:, :d].T.copy())
        lvl = int(rng.integers(0, 5))
        I = DyadicCube(lvl, tuple(int(v) for v in rng.integers(0, 2 ** lvl, n)))
        step = I.side / int(rng.integers(4, 13))
        good, defect = verify_skeleton_projection(I, V, step)
        bad += not good
        worst = max(worst, defect / step)
    report(6, "skeleton projection", bad == 0,
           f"1000 pairs, {bad} defects above 2 step, max defect/step = {worst:.3f}", t0)


# 7 ------------------------------------------------------------------------
def test_07_skeleton_adr():
    t0 = time.time()
    worst = 0.0
    n_trees = 0
    for cloud, K in ((setgen.segment(1025), 8), (setgen.square_boundary(1024), 7),
                     (setgen.lipschitz_graph(1.0, 1025), 8)):
        lat = build_lattice(cloud, depth=K)
        fr = build_doubling_frostman(lat, 1)
        forest = build_corona(lat, fr.mu)
        for R in forest.roots:
            if not forest.theta[R] > 0:
                continue
            rt = regularize_tree(forest, R)
            sk = build_skeleton_approximant(rt, forest, 1, n_balls=100, seed=R)
            worst = max(worst, sk.report["adr_C"])
            n_trees += 1
    report(7, "skeleton measure ADR", worst <= 32,
           f"{n_trees} trees x 100 balls, two-sided C = {worst:.2f} (<= 32)", t0)


# 8 ------------------------------------------------------------------------
def test_08_tst_ratio():
    t0 = time.time()
    ok = True
    notes = []
    for L in (0.5, 1.0):
        ratios = []
        for K in (8, 9, 10):
            g = setgen.lipschitz_graph(L, 2 ** (K + 1) + 1)
            lat = build_lattice(g, depth=K)
            ratios.append(tst_sum(beta_spectrum(g, lat, multiplier=3), lat).ratio)
        spread = max(ratios) / min(ratios)
        ok &= spread <= 2
        notes.append(f"L={L}: ratios {', '.join(f'{r:.4f}' for r in ratios)}")
    sums = []
    for k in (3, 4, 5):
        c = setgen.four_corner_cantor(k, 1)
        lat = lattice_for(c, 12)
        s = tst_sum(beta_spectrum(c, lat, multiplier=3), lat).beta_sum
        sums.append(s)
        ok &= s >= 0.5 * k * FLAT_BASELINE
    notes.append("Cantor beta-sums k=3,4,5: " + ", ".join(f"{s:.2f}" for s in sums))
    report(8, "TST ratio", ok, "; ".join(notes), t0)


# 9 ------------------------------------------------------------------------
def test_09_capacity():
    t0 = time.time()
    seg = setgen.segment(257)
    a = capacity_lower_bound(seg, 1, depth=6)
    b = capacity_lower_bound(seg.scaled(0.5), 1, depth=6)
    homog = abs(b["bound"] - 0.5 * a["bound"])
    flat = [a["flatness_over_mass"]]
    for cloud, K in ((setgen.lipschitz_graph(1.0, 513), 7), (setgen.square_boundary(257), 6)):
        flat.append(capacity_lower_bound(cloud, 1, depth=K)["flatness_over_mass"])
    golden = abs(a["bound"] / SEGMENT_CAPACITY - 1)
    ok = homog <= 1e-9 and max(flat) <= FLATNESS_C and a["bound"] > 0 and golden <= 0.2
    report(9, "capacity pipeline", ok,
           f"|bound(E/2) - bound(E)/2| = {homog:.1e}, max F/mu = {max(flat):.3f} "
           f"(C = {FLATNESS_C}), segment bound {a['bound']:.4f}", t0)


# 10 -----------------------------------------------------------------------
def test_10_denjoy_exponent():
    t0 = time.time()
    S = setgen.segment(257)
    full = denjoy_bound(S, S, 1, depth=6)["bound"]
    half = denjoy_bound(S.subset(S.points[:, 0] <= 0.5), S, 1, depth=6)["bound"]
    ratio = half / full
    report(10, "Denjoy exponent", abs(ratio / 0.5 ** 1.5 - 1) <= 0.1,
           f"ratio {ratio:.5f} vs (1/2)^(3/2) = {0.5 ** 1.5:.5f}", t0)


# 11 -----------------------------------------------------------------------
def test_11_projections():
    t0 = time.time()
    fs = favard_length(setgen.segment(1025), n_angles=2000)
    r = 0.5
    fc = favard_length(setgen.circle(1024, r), n_angles=2000)
    fk = [favard_length(setgen.four_corner_cantor(k, 1), n_angles=2000) for k in range(2, 7)]
    dec = all(x > y for x, y in zip(fk, fk[1:]))
    ok = abs(fs - 2) <= 1e-3 and abs(fc - 2 * math.pi * r) <= 1e-3 and dec
    report(11, "projections", ok, f"Fav(segment) = {fs:.6f}, Fav(circle) - 2 pi r = "
           f"{fc - 2 * math.pi * r:.1e}, Fav(Cantor k=2..6) = "
           + ", ".join(f"{v:.4f}" for v in fk), t0)


# 12 -----------------------------------------------------------------------
def test_12_dimension():
    t0 = time.time()
    koch = setgen.koch(7)
    bd = box_dimension(koch)
    sk = wiggly_dimension(koch, 1, 0.1).s_emp
    ss = wiggly_dimension(setgen.segment(1025), 1, 0.1).s_emp
    sc = wiggly_dimension(setgen.four_corner_cantor(5, 1.5), 1, 0.1).s_emp
    cap = math.log(4) / math.log(4 / 1.5)
    ok = (abs(bd - math.log(4) / math.log(3)) <= 0.05 and 1.0 < sk <= bd + 0.05
          and abs(ss - 1) <= 0.02 and sc <= cap + 0.05)
    report(12, "dimension", ok, f"box(Koch7) = {bd:.4f}, s_emp Koch = {sk:.4f}, segment = "
           f"{ss:.4f}, Cantor(5,1.5) = {sc:.4f} (<= {cap + 0.05:.4f})", t0)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
