import math

import numpy as np
import pytest

from gmtkit import setgen
from gmtkit.setgen import (ContentTree, PointCloud, dyadic_content, dyadic_cover,
                           four_corner_cantor, koch, segment, skeleton_set)

from oracles import cantor_count, content_dp, dyadic_cells, koch_count


def test_cantor_counts():
    c0 = four_corner_cantor(0, 1)
    assert len(c0) == 4
    for k in range(4):
        assert len(four_corner_cantor(k, 1)) == cantor_count(k) == 4 ** (k + 1)


def test_koch_counts():
    for k in range(5):
        assert len(koch(k)) == koch_count(k) == 4 ** k + 1
    assert koch(3).curve


def test_generate_dispatch_and_unknown():
    assert len(setgen.generate("segment", count=9)) == 9
    with pytest.raises(ValueError):
        setgen.generate("nope")


def test_pointcloud_validation():
    with pytest.raises(ValueError):
        PointCloud(2, 1, 0.1, [[1.5, 0.0]])
    with pytest.raises(ValueError):
        PointCloud(2, 1, 0.0, [[0.5, 0.0]])


def test_json_roundtrip_bit_exact():
    c = setgen.lipschitz_graph(1.0, 65, seed=3)
    back = PointCloud.from_json(c.to_json())
    assert np.array_equal(back.points, c.points)
    assert back.resolution == c.resolution
    assert back.to_json() == c.to_json()


def test_csv_roundtrip_and_duplicates():
    c = segment(17)
    back = PointCloud.from_csv(c.to_csv(), 1, c.resolution)
    assert np.array_equal(back.points, c.points)
    with pytest.raises(ValueError):
        PointCloud.from_csv("x0,x1\n0.1,0.1\n0.1,0.1\n", 1, 0.1)


def test_arclength():
    assert segment(33).arclength() == pytest.approx(1.0, abs=1e-12)
    sq = setgen.square_boundary(64)
    assert sq.arclength() == pytest.approx(4.0, abs=1e-12)


def test_dyadic_cover_cases():
    one = PointCloud(2, 0, 1 / 64, [[0.3, 0.3]])
    assert len(dyadic_cover(one, 0, level=3)) == 1
    seg = segment(1025)
    cubes = dyadic_cover(seg, 0, level=4)
    assert len(cubes) in (16, 17)
    assert {c.index for c in cubes} == dyadic_cells(seg.points, 4)
    grid = setgen.square_grid(1 / 32)
    assert len(dyadic_cover(grid, 0, level=3)) == 4 ** 3


def test_skeleton_set():
    one = PointCloud(2, 0, 1 / 64, [[0.3, 0.3]])
    sk = skeleton_set(one, 0, 1, 1 / 8, level=1)
    # the 4 edges of [0, 1/2]^2 sampled at step 1/8: 4*4 nodes
    assert len(sk) == 16
    seg = segment(257)
    for lev in (2, 3, 4):
        sk = skeleton_set(seg, 0, 1, 2.0 ** -(lev + 2), level=lev)
        from scipy.spatial import cKDTree
        dist = cKDTree(seg.points).query(sk.points)[0]
        assert dist.max() <= math.sqrt(2) * 2.0 ** -lev + 1e-12
    with pytest.raises(ValueError):
        skeleton_set(seg, 0, 2, 0.1, level=2)


def test_content_cases():
    seg = segment(1025)
    for fl in (1, 3, 6, 10):
        assert dyadic_content(seg, 1, fl) == pytest.approx(math.sqrt(2), abs=1e-12)
    sq = setgen.square_grid(1 / 64)
    for fl in range(1, 7):
        assert dyadic_content(sq, 2, fl) == 2.0
    assert dyadic_content(seg, 1, 4, restrict_to=lambda p: p[:, 0] > 2) == 0.0


def test_content_matches_recursive_oracle():
    rng = np.random.default_rng(2)
    for d in (0.5, 1.0, 1.5):
        pts = rng.uniform(0, 1, (30, 2))
        assert dyadic_content(pts, d, 5) == pytest.approx(content_dp(pts, d, 5), abs=1e-12)


def test_content_tree_prefix_matches_direct():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 1, (50, 2))
    tree = ContentTree(pts, 1.0, 6)
    order = rng.permutation(50)
    pref = tree.prefix(order)
    for i in (0, 9, 25, 49):
        assert pref[i] == pytest.approx(dyadic_content(pts[order[:i + 1]], 1.0, 6), abs=1e-12)
    assert np.all(np.diff(pref) >= -1e-15)
