import math

import numpy as np
import pytest

from gmtkit import setgen
from gmtkit.beta import (beta_content, beta_infty, beta_measure_lp, beta_spectrum, max_p,
                         spectrum_to_csv)
from gmtkit.geometry import AffinePlane
from gmtkit.lattice import build_lattice
from gmtkit.measure import build_classical_frostman, choquet_integral

from oracles import line_minimax_grid

KOCH6_UNIT_BETA = 0.14433756729740643   # golden: sqrt(3)/12, half the curve's height


def test_infty_segment_zero():
    seg = setgen.segment(129)
    assert beta_infty(seg, (0.5, 0.0), 0.3, 1).value <= 1e-9


def test_infty_triangle():
    tri = np.array([(0, 0), (1, 0), (0.5, 0.3)])
    assert beta_infty(tri, (0.5, 0.1), 1.0, 1).value == pytest.approx(0.15, abs=1e-9)


def test_infty_empty_ball_flag():
    rec = beta_infty(setgen.segment(9), (0.5, 0.9), 0.1, 1)
    assert rec.empty and rec.value == 0.0


def test_infty_koch_unit_scale():
    k = setgen.koch(6)
    v = beta_infty(k, k.points.mean(0), 1.0, 1).value
    assert v >= 0.05
    assert v == pytest.approx(line_minimax_grid(k.points), abs=1e-6)
    assert v == pytest.approx(KOCH6_UNIT_BETA, abs=1e-9)


def test_measure_line_and_triangle():
    pts = np.column_stack([np.linspace(0, 1, 9), np.linspace(0, 1, 9)])
    assert beta_measure_lp((pts, np.ones(9)), (0.5, 0.5), 1.0, 2, 1).value <= 1e-9
    tri = np.array([(-1, 0), (1, 0), (0, 1)], float)
    rec = beta_measure_lp((tri, np.ones(3)), (0, 0), 2.0, 2, 1)
    assert rec.value == pytest.approx(math.sqrt(1 / 12), abs=1e-9)


def test_measure_p_below_one():
    with pytest.raises(ValueError):
        beta_measure_lp((np.zeros((2, 2)), np.ones(2)), (0, 0), 1.0, 0.5, 1)


def test_content_flat_and_triangle():
    seg = setgen.segment(129)
    assert beta_content(seg, (0.5, 0.0), 0.5, 2, 1).value <= 1e-9
    tri = np.array([[0, 0], [1, 0], [0.5, 0.5]])
    rec = beta_content(tri, (0.5, 0.2), 1.0, 2, 1, finest_level=6)
    # oracle: the least-squares line y = 1/6 evaluated by the Choquet integral
    L = AffinePlane([0, 1 / 6], [[1, 0]])
    ref = choquet_integral(tri, L.distances(tri), 2, 1, 6) ** 0.5
    assert ref - 1e-12 <= rec.value <= ref + 1e-6


def test_content_p_range():
    assert max_p(1) == math.inf and max_p(4) == 4.0
    with pytest.raises(ValueError):
        beta_content(setgen.planar_patch(5), (0.5, 0.5, 0.5), 1.0, 0.5, 2)


@pytest.fixture(scope="module")
def seg_lat():
    return build_lattice(setgen.segment(512), depth=5)


def test_spectrum_flat_and_count(seg_lat):
    recs = beta_spectrum(seg_lat.cloud, seg_lat)
    assert len(recs) == seg_lat.n_cubes
    assert max(r.value for r in recs) <= 1e-9


def test_spectrum_rejects_bad_flavor(seg_lat):
    with pytest.raises(ValueError):
        beta_spectrum(seg_lat.cloud, seg_lat, flavor="nope")
    with pytest.raises(ValueError):
        beta_spectrum(seg_lat.cloud, seg_lat, flavor="measure_lp")


def test_spectrum_koch_positive():
    k = setgen.koch(6)
    lat = build_lattice(k, depth=6)
    recs = beta_spectrum(k, lat, flavor="infty", multiplier=3)
    above = [r for r in recs if not r.below_cutoff]
    assert above and min(r.value for r in above) > 0


def test_spectrum_measure_flavor_and_csv(seg_lat):
    mu = build_classical_frostman(seg_lat, 1)
    recs = beta_spectrum(mu, seg_lat, flavor="measure_lp", multiplier=2)
    assert max(r.value for r in recs) <= 1e-9
    text = spectrum_to_csv(recs, 2, 1).splitlines()
    assert text[0].startswith("cube_id,level,ell,multiplier,flavor,p,beta,plane_base0")
    assert len(text) == 1 + len(recs)


def test_spectrum_thread_invariance(seg_lat):
    k = setgen.koch(4)
    lat = build_lattice(k, depth=4)
    a = [r.value for r in beta_spectrum(k, lat, threads=1)]
    b = [r.value for r in beta_spectrum(k, lat, threads=3)]
    assert a == b
