"""Command-line front end: ``gmtkit <command> [flags]``.

Every output file starts with the library version and a verbatim config echo
(a ``#`` comment block for CSV, a ``config`` key for JSON). Exit codes: 0 ok,
1 usage / input error, 2 verification failure.
"""
from __future__ import annotations

import argparse
import inspect
import json
import math
import os
import sys

import numpy as np

from . import __version__
from . import analysis, beta, corona, lattice, measure, projections, setgen
from ._parallel import thread_count
from .geometry import grassmann_samples
from .setgen import DyadicCube, PointCloud

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- config / io

def _config(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    cfg["threads"] = thread_count(args.threads)
    return cfg


def _header(cfg: dict) -> dict:
    return {"gmtkit_version": __version__, "config": cfg}


def _sorted(obj):
    if isinstance(obj, dict):
        return {k: _sorted(obj[k]) for k in sorted(obj)}
    if isinstance(obj, list):
        return [_sorted(v) for v in obj]
    return obj


def _dump(obj) -> str:
    # version first, then the config echo, then the payload (keys sorted below)
    head = {k: _sorted(analysis._jsonable(obj[k])) for k in obj}
    return json.dumps(head, indent=1) + "\n"


def _write_json(path, cfg, payload):
    obj = _header(cfg)
    obj["result"] = payload
    with open(path, "w") as fh:
        fh.write(_dump(obj))


def _write_csv(path, cfg, text):
    with open(path, "w") as fh:
        fh.write(f"# gmtkit {__version__}\n")
        fh.write("# config: " + json.dumps(cfg, sort_keys=True) + "\n")
        fh.write(text)


def read_output(path) -> dict:
    """Load a JSON file written by this CLI (header + result)."""
    with open(path) as fh:
        return json.load(fh)


def _family_params(args) -> dict:
    fn = setgen.FAMILIES[args.family]
    sig = inspect.signature(fn).parameters
    depth = args.depth if args.set_depth is None else args.set_depth
    table = {"count": args.count, "depth": depth, "eta": args.eta, "L": args.L,
             "seed": args.seed, "radius": args.radius, "step": args.step, "nx": args.nx}
    return {k: v for k, v in table.items() if k in sig and v is not None}


def load_cloud(args) -> PointCloud:
    if args.input:
        try:
            with open(args.input) as fh:
                obj = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read {args.input}: {exc}") from None
        obj = obj.get("result", obj)
        try:
            cloud = PointCloud.from_json(json.dumps(obj))
        except (KeyError, ValueError, TypeError) as exc:
            raise UsageError(f"bad point cloud in {args.input}: {exc}") from None
    else:
        try:
            cloud = setgen.generate(args.family, **_family_params(args))
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None
    if args.scale != 1.0:
        if not 0 < args.scale <= 1:
            raise UsageError("--scale must lie in (0, 1]")
        cloud = cloud.scaled(args.scale)
    return cloud


def _depth(args, cloud) -> int:
    return analysis._max_depth(cloud, args.rho, args.depth)


def _lattice(args, cloud):
    return lattice.build_lattice(cloud, rho=args.rho, c0=args.c0, depth=_depth(args, cloud))


def _d(args, cloud) -> int:
    return cloud.d if args.d is None else args.d


def _out(args, name) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


# ---------------------------------------------------------------- commands

def cmd_gen(args, cfg):
    cloud = load_cloud(args)
    _write_json(_out(args, "cloud.json"), cfg, json.loads(cloud.to_json()))
    print(f"gen: {cloud.label or args.family} n={cloud.n} d={cloud.d} points={len(cloud)} "
          f"resolution={cloud.resolution:.6g}")
    return EXIT_OK


def cmd_lattice(args, cfg):
    cloud = load_cloud(args)
    lat = _lattice(args, cloud)
    rep = lattice.verify_lattice(lat)
    _write_csv(_out(args, "lattice.csv"), cfg, lat.to_csv())
    _write_json(_out(args, "lattice.json"), cfg, rep)
    ok = rep["partition"] and rep["nesting"] and rep["center_in_cube"] and rep["outer_ok"]
    print(f"lattice: depth={lat.depth} cubes={lat.n_cubes} outer={rep['outer_factor']:.4g} "
          f"inner={rep['inner_factor']:.4g} ok={ok}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_frostman(args, cfg):
    cloud = load_cloud(args)
    lat = _lattice(args, cloud)
    fr = measure.build_doubling_frostman(lat, _d(args, cloud))
    _write_csv(_out(args, "measures.csv"), cfg, measure.measures_to_csv(fr.mu))
    _write_json(_out(args, "frostman.json"), cfg, fr.report)
    r = fr.report
    print(f"frostman: C0={fr.C0:.6g} C1={r['C1']:.6g} Cdb={r['Cdb']:.6g} A={r['A']:.6g} "
          f"mass={r['total_mass']:.6g}")
    return EXIT_OK


def cmd_beta(args, cfg):
    cloud = load_cloud(args)
    lat = _lattice(args, cloud)
    d = _d(args, cloud)
    src = cloud
    if args.flavor == "measure_lp":
        src = measure.build_classical_frostman(lat, d)
    recs = beta.beta_spectrum(src, lat, flavor=args.flavor, multiplier=args.multiplier,
                              p=args.p, d=d, threads=args.threads)
    _write_csv(_out(args, "beta.csv"), cfg, beta.spectrum_to_csv(recs, cloud.n, d))
    vals = [r.value for r in recs if not r.empty]
    print(f"beta: flavor={args.flavor} cubes={len(recs)} max={max(vals):.6g} "
          f"mean={float(np.mean(vals)):.6g}")
    return EXIT_OK


def _forest(args, cloud):
    lat = _lattice(args, cloud)
    fr = measure.build_doubling_frostman(lat, _d(args, cloud))
    return corona.build_corona(lat, fr.mu, tau=args.tau)


def cmd_corona(args, cfg):
    cloud = load_cloud(args)
    forest = _forest(args, cloud)
    rep = corona.verify_corona(forest)
    with open(_out(args, "forest.json"), "w") as fh:
        obj = _header(cfg)
        obj["result"] = rep
        obj["forest"] = json.loads(forest.to_json())
        fh.write(_dump(obj))
    if args.skeleton:
        d = _d(args, cloud)
        if 0 < d < cloud.n:
            rt = corona.regularize_tree(forest, forest.roots[0])
            sk = corona.build_skeleton_approximant(rt, forest, d)
            _write_csv(_out(args, "nu.csv"), cfg, sk.nu.to_csv())
    ok = rep["trees_partition"] and rep["decay_ok"] and rep["packing_ok"]
    print(f"corona: roots={rep['n_roots']} generations={rep['generations']} "
          f"sandwich_C={rep['sandwich_C']:.4g} packing={rep['packing_sum']:.6g}"
          f"<={rep['packing_bound']:.6g} ok={ok}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_tst(args, cfg):
    cloud = load_cloud(args)
    lat = _lattice(args, cloud)
    d = _d(args, cloud)
    recs = beta.beta_spectrum(cloud, lat, flavor=args.flavor, multiplier=args.multiplier,
                              p=args.p, d=d, threads=args.threads)
    rep = analysis.tst_sum(recs, lat, 0, d)
    _write_json(_out(args, "tst.json"), cfg, json.loads(rep.to_json()))
    print(f"tst: beta_sum={rep.beta_sum:.6g} H^d={rep.hd:.6g} ratio={rep.ratio:.6g}")
    return EXIT_OK


def cmd_capacity(args, cfg):
    cloud = load_cloud(args)
    rep = analysis.capacity_lower_bound(cloud, _d(args, cloud), depth=_depth(args, cloud),
                                        rho=args.rho, c0=args.c0, threads=args.threads)
    _write_json(_out(args, "capacity.json"), cfg, rep)
    print(f"capacity: bound={rep['bound']:.12g} mu={rep['mu_total']:.6g} "
          f"flatness={rep['flatness']:.6g}")
    return EXIT_OK


def cmd_denjoy(args, cfg):
    sigma = load_cloud(args)
    if not 0 < args.fraction <= 1:
        raise UsageError("--fraction must lie in (0, 1]")
    cut = sigma.points[:, 0].min() + args.fraction * np.ptp(sigma.points[:, 0])
    E = sigma.subset(sigma.points[:, 0] <= cut + 1e-12)
    rep = analysis.denjoy_bound(E, sigma, _d(args, sigma), depth=args.depth, rho=args.rho,
                                flavor=args.flavor, multiplier=args.multiplier,
                                threads=args.threads)
    _write_json(_out(args, "denjoy.json"), cfg, rep)
    print(f"denjoy: bound={rep['bound']:.6g} mu(E)={rep['mu_E']:.6g} C1={rep['C1']:.6g}")
    return EXIT_OK


def cmd_favard(args, cfg):
    cloud = load_cloud(args)
    if cloud.n != 2:
        raise UsageError("favard needs a planar set")
    delta = cloud.resolution
    fav = projections.favard_length(cloud, n_angles=args.angles, delta=delta)
    prof = projections.favard_profile(cloud.points, args.angles, delta)
    angles = [float(a) for a in (np.arange(args.angles) + 0.5) * np.pi / args.angles]
    pp = projections.ProjectionProfile(angles, prof, delta)
    _write_csv(_out(args, "favard.csv"), cfg, pp.to_csv())
    _write_json(_out(args, "favard.json"), cfg, {"favard": fav, "delta": delta,
                                                 "n_angles": args.angles})
    print(f"favard: {fav:.6g} angles={args.angles} delta={delta:.3g}")
    return EXIT_OK


def cmd_pbp(args, cfg):
    cloud = load_cloud(args)
    lat = _lattice(args, cloud)
    rep = projections.pbp_constant(cloud, lat, n_dirs=args.grassmann, d=_d(args, cloud),
                                   threads=args.threads)
    _write_json(_out(args, "pbp.json"), cfg, {"delta_hat": rep.delta_hat,
                                              "worst_cube_id": rep.worst_cube_id,
                                              "worst_scale": rep.worst_scale,
                                              "n_dirs": rep.n_dirs, "cutoff": rep.cutoff,
                                              "flagged": rep.flagged, "pairs": rep.per_pair})
    print(f"pbp: delta_hat={rep.delta_hat:.6g} worst_cube={rep.worst_cube_id} "
          f"scale={rep.worst_scale:.4g}")
    return EXIT_OK


def cmd_dim(args, cfg):
    cloud = load_cloud(args)
    box = analysis.box_dimension(cloud)
    lat = _lattice(args, cloud)
    wig = analysis.wiggliness(cloud, lat, threads=args.threads)
    beta0 = max(wig["beta0"], 1e-12)
    rep = analysis.wiggly_dimension(cloud, _d(args, cloud), beta0, mode=args.mode,
                                    kappa=args.kappa, seed=args.seed or 0)
    _write_json(_out(args, "dim.json"), cfg, {"box_dimension": box, "wiggliness": wig,
                                              "wiggly": json.loads(rep.to_json())})
    s = "symbolic" if rep.s_emp is None else f"{rep.s_emp:.6g}"
    print(f"dim: box={box:.6g} beta0={wig['beta0']:.4g} s_emp={s} "
          f"closed_form={rep.closed_form:.6g}")
    return EXIT_OK


def _check(rows, name, ok, constant=None):
    rows.append({"check": name, "pass": bool(ok),
                 "constant": None if constant is None else analysis._jsonable(constant)})


def run_verify(cloud: PointCloud, args) -> list:
    """Full invariant suite on one set; returns rows {check, pass, constant}."""
    rows = []
    d = _d(args, cloud)
    lat = _lattice(args, cloud)
    lr = lattice.verify_lattice(lat)
    _check(rows, "lattice partition and nesting", lr["partition"] and lr["nesting"])
    _check(rows, "lattice center in cube", lr["center_in_cube"])
    _check(rows, "lattice outer ball factor <= 1", lr["outer_ok"], lr["outer_factor"])
    _check(rows, "lattice 2B chain", lr["chain_2B"])
    _check(rows, "lattice inner ball factor (effective c0)", lr["inner_factor"] > 0,
           lr["inner_factor"])
    fr = measure.build_doubling_frostman(lat, d)
    r = fr.report
    _check(rows, "frostman mass conservation", r["max_mass_error"] <= 1e-12, r["max_mass_error"])
    _check(rows, "frostman Poor/Rich disjoint", r["poor_rich_disjoint"], fr.C0)
    _check(rows, "frostman mass stays", r.get("mass_stays_ok", True),
           [r.get("mass_stays_min_ratio"), r.get("mass_stays_max_ratio")])
    _check(rows, "frostman density parent", r.get("density_parent_ok", True))
    _check(rows, "frostman growth C1 finite", math.isfinite(r["C1"]), r["C1"])
    _check(rows, "frostman doubling C_db finite", math.isfinite(r["Cdb"]), r["Cdb"])
    forest = corona.build_corona(lat, fr.mu, tau=args.tau)
    cr = corona.verify_corona(forest)
    _check(rows, "corona trees partition", cr["trees_partition"])
    _check(rows, "corona stopping cubes cover", cr["stop_disjoint_cover"])
    _check(rows, "corona Top generations disjoint", cr["top_disjoint"])
    _check(rows, "corona density sandwich", math.isfinite(cr["sandwich_C"]), cr["sandwich_C"])
    _check(rows, "corona density decay", cr["decay_ok"], cr["decay_max_ratio"])
    _check(rows, "corona Carleson packing", cr["packing_ok"],
           cr["packing_sum"] / max(cr["packing_bound"], 1e-300))
    if 0 < d < cloud.n:
        R = forest.roots[0]
        rt = corona.regularize_tree(forest, R)
        rr = rt.report
        _check(rows, "regularized cubes cover", rr["reg_disjoint_cover"])
        _check(rows, "tree inside tree_*", rr["tree_in_tree_star"])
        _check(rows, "d_R 1-Lipschitz", rr["d_R_lipschitz"])
        _check(rows, "touching Reg cubes comparable", math.isfinite(rr["reg_touching_ratio"]),
               rr["reg_touching_ratio"])
        _check(rows, "measured C0", math.isfinite(rr["C0"]), rr["C0"])
        sk = corona.build_skeleton_approximant(rt, forest, d)
        sr = sk.report
        _check(rows, "skeleton mass transfer", sr["mass_error"] <= 1e-9, sr["mass_error"])
        _check(rows, "skeleton measure ADR (C <= 32)", sr["adr_C"] <= 32, sr["adr_C"])
        tr = corona.transfer_check(forest, rt, sk)
        _check(rows, "beta transfer", math.isfinite(tr["transfer_C"]), tr["transfer_C"])
        _check(rows, "correction packing", math.isfinite(tr["packing_C"]), tr["packing_C"])
        rng = np.random.default_rng(args.seed or 0)
        worst = 0.0
        ok = True
        for V in grassmann_samples(cloud.n, d, 20, seed=args.seed or 0):
            lvl = int(rng.integers(1, 4))
            idx = tuple(int(v) for v in rng.integers(0, 2 ** lvl, cloud.n))
            I = DyadicCube(lvl, idx)
            step = I.side / 16
            good, defect = corona.verify_skeleton_projection(I, V, step)
            ok &= good
            worst = max(worst, defect / step)
        _check(rows, "skeleton projection defect <= 2 step", ok, worst)
    if cloud.n == 2 and d == 1:
        pr = projections.pbp_constant(cloud, lat, n_dirs=180, threads=args.threads)
        _check(rows, "PBP constant", pr.delta_hat >= 0, pr.delta_hat)
    return rows


def cmd_verify(args, cfg):
    cloud = load_cloud(args)
    rows = run_verify(cloud, args)
    _write_json(_out(args, "verify.json"), cfg, rows)
    n_fail = sum(not r["pass"] for r in rows)
    print(f"verify: {len(rows)} checks, {n_fail} failed")
    return EXIT_OK if n_fail == 0 else EXIT_VERIFY


COMMANDS = {
    "gen": cmd_gen, "lattice": cmd_lattice, "frostman": cmd_frostman, "beta": cmd_beta,
    "corona": cmd_corona, "tst": cmd_tst, "capacity": cmd_capacity, "denjoy": cmd_denjoy,
    "favard": cmd_favard, "pbp": cmd_pbp, "dim": cmd_dim, "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("set")
    g.add_argument("--family", default="segment", choices=sorted(setgen.FAMILIES))
    g.add_argument("--input", help="PointCloud JSON (overrides --family)")
    g.add_argument("--count", type=int)
    g.add_argument("--set-depth", type=int, help="generation depth for cantor/koch")
    g.add_argument("--eta", type=float)
    g.add_argument("--L", type=float)
    g.add_argument("--radius", type=float)
    g.add_argument("--step", type=float)
    g.add_argument("--nx", type=int)
    g.add_argument("--scale", type=float, default=1.0, help="dilate the set by this factor")
    g.add_argument("--seed", type=int)
    p = common.add_argument_group("parameters")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--c0", type=float)
    p.add_argument("--depth", type=int, default=6, help="lattice depth (capped by resolution)")
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--d", type=int)
    p.add_argument("--multiplier", type=float, default=3.0)
    p.add_argument("--flavor", default="infty", choices=beta.FLAVORS)
    p.add_argument("--grassmann", type=int, help="direction samples for pbp")
    p.add_argument("--angles", type=int, default=2000)
    p.add_argument("--fraction", type=float, default=0.5, help="denjoy: E = left fraction")
    p.add_argument("--mode", default="empirical", choices=("empirical", "paper"))
    p.add_argument("--kappa", type=int, default=2)
    p.add_argument("--skeleton", action="store_true", help="corona: also export nu")
    p.add_argument("--out", default="gmtkit_out")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (fallback: GMTKIT_THREADS)")
    parser = _Parser(prog="gmtkit", description="multiscale geometric measure theory toolkit")
    parser.add_argument("--version", action="version", version=f"gmtkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common])
        sp.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args, _config(args))
    except UsageError as exc:
        print(f"gmtkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
