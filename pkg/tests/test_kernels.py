import os
import subprocess
import sys

import numpy as np
import pytest

from gmtkit import _kernels

from oracles import interval_union_length

py = _kernels.backend("python")
BACKENDS = ["python"] + (["cython"] if _kernels.BACKEND == "cython" else [])


def test_backend_lookup():
    assert _kernels.BACKEND in ("cython", "python")
    with pytest.raises(ValueError):
        _kernels.backend("fortran")


@pytest.mark.parametrize("name", BACKENDS)
def test_greedy_net_is_a_net(name):
    k = _kernels.backend(name)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, (400, 2))
    sep = 0.1
    c = k.greedy_net(pts, np.ones(400, bool), np.array([5], dtype=np.int64), sep)
    assert c[0] == 5
    cen = pts[c]
    d = np.sqrt(((cen[:, None] - cen[None]) ** 2).sum(-1))
    assert d[np.triu_indices(len(c), 1)].min() >= sep
    cover = np.sqrt(((pts[:, None] - cen[None]) ** 2).sum(-1)).min(1)
    assert cover.max() < sep


@pytest.mark.parametrize("name", BACKENDS)
def test_prefix_content_small_tree(name):
    k = _kernels.backend(name)
    # root 0 (cap 1.0) with leaves 1, 2, 3 (cap 0.4 each)
    parent = np.array([-1, 0, 0, 0], dtype=np.int64)
    cap = np.array([1.0, 0.4, 0.4, 0.4])
    out = k.prefix_content(np.array([1, 1, 2, 3], dtype=np.int64), parent, cap)
    assert np.allclose(out, [0.4, 0.4, 0.8, 1.0])


@pytest.mark.parametrize("name", BACKENDS)
def test_interval_union_against_oracle(name):
    k = _kernels.backend(name)
    rng = np.random.default_rng(1)
    lo = np.sort(rng.uniform(0, 1, (5, 30)), axis=1)
    hi = lo + rng.uniform(0, 0.1, (5, 30))
    got = k.interval_union_lengths(lo, hi)
    for i in range(5):
        assert got[i] == pytest.approx(interval_union_length(zip(lo[i], hi[i])), abs=1e-12)


@pytest.mark.skipif(_kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_backends_agree():
    c = _kernels.backend("cython")
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 1, (600, 3))
    elig = rng.uniform(size=600) < 0.8
    init = np.array([3, 77], dtype=np.int64)
    assert np.array_equal(py.greedy_net(pts, elig, init, 0.15), c.greedy_net(pts, elig, init, 0.15))
    parent = np.r_[-1, np.zeros(8, np.int64), np.repeat(np.arange(1, 9), 4)].astype(np.int64)
    cap = np.r_[2.0, np.full(8, 0.6), np.full(32, 0.2)]
    leaf = rng.integers(9, 41, 100).astype(np.int64)
    assert np.array_equal(py.prefix_content(leaf, parent, cap), c.prefix_content(leaf, parent, cap))
    lo = np.sort(rng.uniform(0, 1, (4, 50)), axis=1)
    hi = lo + 0.02
    assert np.allclose(py.interval_union_lengths(lo, hi), c.interval_union_lengths(lo, hi),
                       atol=1e-14)


def test_pure_env_forces_fallback_with_identical_results():
    code = ("import json; from gmtkit import _kernels, setgen, lattice, setgen as s;"
            "lat = lattice.build_lattice(setgen.koch(4), depth=4);"
            "print(_kernels.BACKEND);"
            "print(json.dumps([lat.ids(k).tolist() for k in range(5)]"
            " + [lat.levels[4].labels.tolist(), s.dyadic_content(setgen.koch(4), 1.2)]))")
    outs = {}
    for pure in ("1", "0"):
        env = dict(os.environ, GMTKIT_PURE=pure)
        r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                           text=True, check=True)
        outs[pure] = r.stdout.splitlines()
    assert outs["1"][0] == "python"
    assert outs["1"][1] == outs["0"][1]


def test_benchmark_script_runs(capsys):
    import importlib.util
    path = os.path.join(os.path.dirname(__file__), "..", "benchmarks", "bench_kernels.py")
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--repeat", "1"])
    out = capsys.readouterr().out
    assert "prefix_content" in out and "MISMATCH" not in out
