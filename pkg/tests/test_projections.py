import math

import numpy as np
import pytest

from gmtkit import setgen
from gmtkit.geometry import GrassmannPoint, grassmann_distance, line_frame
from gmtkit.lattice import build_lattice, verify_lattice
from gmtkit.projections import (ProjectionProfile, favard_length, favard_profile,
                                pbp_constant, shadow_measure)

from oracles import interval_union_length


def line(t):
    return GrassmannPoint(line_frame(t))


def test_segment_shadows():
    seg = setgen.segment(257)
    dlt = seg.resolution
    assert shadow_measure(seg, line(0.0)) == pytest.approx(1 + 2 * dlt, abs=1e-12)
    assert shadow_measure(seg, line(math.pi / 2)) == pytest.approx(2 * dlt, abs=1e-12)


def test_cantor_shadow_matches_interval_oracle():
    c = setgen.four_corner_cantor(3, 1)
    dlt = c.resolution
    got = shadow_measure(c, line(0.0))
    want = interval_union_length([(x - dlt, x + dlt) for x in c.points[:, 0]])
    assert got == pytest.approx(want, abs=1e-12)
    assert got <= (c.diam + 2 * dlt)


def test_shadow_in_ball_and_bounds():
    k = setgen.koch(5)
    for t in np.linspace(0, math.pi, 7):
        s = shadow_measure(k, line(t), ball=((0.5, 0.1), 0.2))
        assert 0 <= s <= 0.4 + 2 * k.resolution + 1e-12


def test_shadow_two_dim_grid():
    patch = setgen.planar_patch(9)
    V = GrassmannPoint(np.eye(3)[:2])
    s = shadow_measure(patch, V)
    dlt = patch.resolution
    # occupancy grid at step delta: between the true shadow and a 2-cell halo
    assert 1.0 <= s <= (1 + 4 * dlt) ** 2


def test_shadow_lipschitz_in_direction():
    k = setgen.koch(5)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(40):
        a, b = rng.uniform(0, math.pi, 2)
        gap = grassmann_distance(line(a), line(b))
        diff = abs(shadow_measure(k, line(a)) - shadow_measure(k, line(b)))
        worst = max(worst, (diff - 4 * k.resolution) / max(gap, 1e-12))
    assert worst <= 2 * k.diam


def test_favard_segment_and_circle():
    assert favard_length(setgen.segment(1025)) == pytest.approx(2.0, abs=1e-3)
    r = 0.5
    assert favard_length(setgen.circle(1024, r)) == pytest.approx(2 * math.pi * r, abs=1e-3)


def test_favard_cantor_decreasing():
    vals = [favard_length(setgen.four_corner_cantor(k, 1), n_angles=400) for k in (2, 3, 4)]
    assert vals[0] > vals[1] > vals[2]


def test_favard_needs_plane():
    with pytest.raises(ValueError):
        favard_length(setgen.planar_patch(5))


def test_profile_csv():
    seg = setgen.segment(65)
    prof = favard_profile(seg.points, 8, seg.resolution)
    ang = list((np.arange(8) + 0.5) * math.pi / 8)
    text = ProjectionProfile(ang, prof, seg.resolution).to_csv().splitlines()
    assert text[0] == "angle,shadow" and len(text) == 9


def test_pbp_segment():
    seg = setgen.segment(257)
    rep = pbp_constant(seg, build_lattice(seg, depth=5))
    assert rep.delta_hat >= 0.3
    assert not rep.flagged


def test_pbp_square_boundary():
    sq = setgen.square_boundary(256)
    assert pbp_constant(sq, build_lattice(sq, depth=5)).delta_hat >= 0.5


def test_pbp_isolated_points_flagged():
    pts = setgen.PointCloud(2, 1, 1 / 1024, [[0.1, 0.1], [0.9, 0.9], [0.1, 0.9]])
    rep = pbp_constant(pts, build_lattice(pts, depth=3), cutoff=0.01)
    assert rep.flagged and rep.delta_hat < 0.01


def test_pbp_planar_patch_3d():
    p = setgen.planar_patch(17)
    rep = pbp_constant(p, build_lattice(p, depth=3), n_dirs=60, cutoff=0.2)
    assert rep.delta_hat > 0.5


def test_pbp_bounded_by_lower_content_regularity():
    # PBP => lower content regularity: delta_hat <= C * (measured LCR constant)
    for cl in (setgen.segment(257), setgen.square_boundary(256), setgen.koch(5)):
        lat = build_lattice(cl, depth=5)
        rep = pbp_constant(cl, lat, n_dirs=180)
        lcr = math.inf
        for k in range(1, 6):
            ell = lat.ell(k)
            if ell < 16 * cl.resolution:
                continue
            for q in lat.ids(k):
                c = lat.center(int(q))
                sel = cl.points[((cl.points - c) ** 2).sum(1) <= ell * ell]
                lcr = min(lcr, setgen.dyadic_content(sel, 1, setgen.resolution_level(
                    cl.resolution), frame_level=0) / ell)
        assert rep.delta_hat <= 4 * lcr
    assert verify_lattice(lat)["partition"]
