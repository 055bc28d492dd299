import numpy as np
import pytest

from gmtkit import setgen
from gmtkit.lattice import ball_members, build_lattice, neighbors, verify_lattice


@pytest.fixture(scope="module")
def seg_lat():
    return build_lattice(setgen.segment(1025), rho=0.5, depth=8)


def test_segment_lattice_counts_and_properties(seg_lat):
    for k in range(9):
        m = len(seg_lat.ids(k))
        assert 2 ** k / 4 <= m <= 4 * 2 ** k
    rep = verify_lattice(seg_lat)
    assert rep["partition"] and rep["nesting"] and rep["center_in_cube"] and rep["chain_2B"]
    assert rep["outer_ok"] and rep["inner_ok"]


@pytest.mark.parametrize("cloud", [setgen.square_boundary(256), setgen.four_corner_cantor(3),
                                   setgen.koch(4), setgen.planar_patch(17)])
def test_lattice_properties_other_sets(cloud):
    rep = verify_lattice(build_lattice(cloud, depth=4))
    assert rep["partition"] and rep["nesting"] and rep["center_in_cube"] and rep["chain_2B"]
    assert rep["outer_ok"] and rep["inner_factor"] > 0


def test_single_point_chain():
    one = setgen.PointCloud(2, 0, 1 / 64, [[0.3, 0.3]])
    lat = build_lattice(one, depth=3)
    assert [len(lat.ids(k)) for k in range(4)] == [1, 1, 1, 1]
    assert all(np.array_equal(lat.members(int(lat.ids(k)[0])), [0]) for k in range(4))
    assert neighbors(lat, 0) == [0]


def test_depth_too_fine_and_bad_params():
    with pytest.raises(ValueError):
        build_lattice(setgen.segment(9), depth=6)
    with pytest.raises(ValueError):
        build_lattice(setgen.segment(9), rho=0.7, depth=1)
    with pytest.raises(ValueError):
        build_lattice(setgen.segment(9), c0=0.5, depth=1)


def test_neighbors_brute_force(seg_lat):
    lat = seg_lat
    pts = lat.points
    for k in (3, 5):
        ell = lat.ell(k)
        ids = [int(c) for c in lat.ids(k)]
        for q in ids:
            got = neighbors(lat, q)
            want = []
            for p in ids:
                a, b = pts[lat.members(q)], pts[lat.members(p)]
                dist = np.sqrt(((a[:, None] - b[None]) ** 2).sum(-1)).min()
                if dist <= ell * (1 + 1e-12):
                    want.append(p)
            assert got == sorted(want)
            assert q in got
            for p in got:
                assert q in neighbors(lat, p)
        # greedy nets have uneven spacing: 2..5 neighbours, never isolated
        counts = [len(neighbors(lat, q)) for q in ids]
        assert 2 <= min(counts) and max(counts) <= 5


def test_neighbors_unknown_id(seg_lat):
    with pytest.raises((KeyError, IndexError, ValueError)):
        neighbors(seg_lat, 10 ** 7)


def test_ball_members(seg_lat):
    pts = seg_lat.points
    assert list(ball_members(seg_lat, pts[10], 0.0)) == [10]
    assert len(ball_members(seg_lat, pts[0], 2.0)) == len(pts)
    rng = np.random.default_rng(0)
    for _ in range(20):
        c, r = rng.uniform(0, 1, 2), rng.uniform(0, 0.5)
        brute = np.flatnonzero(np.sqrt(((pts - c) ** 2).sum(1)) <= r)
        assert np.array_equal(ball_members(seg_lat, c, r), brute)


def test_lattice_csv(seg_lat):
    text = seg_lat.to_csv().splitlines()
    assert text[0] == "cube_id,level,parent_id,center0,center1,ell,member_count"
    assert len(text) == 1 + seg_lat.n_cubes


def test_cubes_have_children_partitioning(seg_lat):
    for q in seg_lat.ids(4):
        ch = seg_lat.children(int(q))
        mem = np.sort(np.concatenate([seg_lat.members(c) for c in ch]))
        assert np.array_equal(mem, np.sort(seg_lat.members(int(q))))
        assert all(seg_lat.parent(c) == q for c in ch)
