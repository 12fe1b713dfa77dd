"""Command line interface: ``catnet <subcommand>``.

Exit codes: 0 success, 1 a verification check failed, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as rngmod
from .config import ConfigError, RunConfig, load_config
from .persist import RunManifest, config_hash, write_json, write_table, write_trajectories

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- grid syntax


def parse_grid(text: str) -> dict:
    """Parse ``t=1,x=0..4:9,y=0..4:9`` into axis arrays.

    ``name=v`` is a single value, ``name=a..b:n`` is ``n`` evenly spaced
    points from ``a`` to ``b`` inclusive, ``name=v1;v2;v3`` lists values.
    """
    out = {}
    if not text or not text.strip():
        raise UsageError("empty grid specification")
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"grid entry {part!r} is not of the form name=values")
        name, val = (s.strip() for s in part.split("=", 1))
        if not name or name in out:
            raise UsageError(f"bad or repeated grid axis {name!r}")
        try:
            if ".." in val:
                rng_part, _, count = val.partition(":")
                lo, hi = (float(v) for v in rng_part.split(".."))
                n = int(count) if count else 2
                if n < 1:
                    raise ValueError
                out[name] = np.linspace(lo, hi, n)
            else:
                out[name] = np.array([float(v) for v in val.split(";")])
        except ValueError as exc:
            raise UsageError(f"cannot parse grid axis {name!r}: {val!r}") from exc
    return out


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


# ---------------------------------------------------------------- parser


def _global_options(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON configuration file")
    p.add_argument("--seed", type=int, default=d, help=f"master seed (default: ${rngmod.SEED_ENV})")
    p.add_argument("--out-dir", default=d if suppress else "out", help="output directory")
    p.add_argument("--workers", type=int, default=d if suppress else 1, help="worker processes")
    p.add_argument("--format", choices=["csv", "json"], default=d if suppress else "csv",
                   help="table output format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"catnet {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate network paths")
    _global_options(p, suppress=True)
    p.add_argument("--paths", type=int, help="number of paths (overrides sim.n_paths)")
    p.add_argument("--scheme", choices=["frozen", "euler"])
    p.add_argument("--x0", help="starting point, comma separated")
    p.add_argument("--T", type=float, help="horizon")
    p.add_argument("--plot", action="store_true", help="also write trajectories.svg")

    p = sub.add_parser("density", help="evaluate transition densities on a grid")
    _global_options(p, suppress=True)
    p.add_argument("--grid", required=True, help="e.g. t=1,x=0..4:9,y=0..4:9")
    p.add_argument("--deriv", type=int, default=0, choices=[0, 1, 2, 3], help="x-derivative order")

    p = sub.add_parser("resolvent", help="estimate resolvents by simulation")
    _global_options(p, suppress=True)
    p.add_argument("--lam", help="comma-separated lambda values")
    p.add_argument("--tol", type=float)
    p.add_argument("--paths", type=int)
    p.add_argument("--functions", help="comma-separated test function names")

    p = sub.add_parser("derivative", help="IBP derivative estimates against finite differences")
    _global_options(p, suppress=True)
    p.add_argument("--t", default="0.5,1", help="comma-separated times")
    p.add_argument("--z", default="0.5,2", help="comma-separated catalyst starting values")
    p.add_argument("--functions", default="cat,exp_cat,gauss_exp")
    p.add_argument("--draws", type=int, default=50000)

    p = sub.add_parser("verify", help="run verification checks")
    _global_options(p, suppress=True)
    p.add_argument("--checks", help="comma-separated check ids (default: all)")

    p = sub.add_parser("list-checks", help="list the verification catalog")
    _global_options(p, suppress=True)
    return parser


# ---------------------------------------------------------------- commands


def _need(rc: RunConfig | None, attr: str, what: str):
    if rc is None or getattr(rc, attr) is None:
        raise UsageError(f"this command needs a configuration with {what}")
    return getattr(rc, attr)


def network_functions(d: int) -> dict:
    fns = {
        "exp_sum": lambda x: np.exp(-x.sum(axis=1)),
        "inv_prod": lambda x: 1.0 / (1.0 + np.prod(x, axis=1)),
    }
    for k in range(d):
        fns[f"exp_x{k + 1}"] = (lambda k: lambda x: np.exp(-x[:, k]))(k)
    return fns


def cmd_simulate(args, rc, seed, out: Path, manifest: RunManifest) -> int:
    from .simulator import SimConfig, simulate_euler, simulate_frozen

    net = _need(rc, "network", "a network (d, edges, gamma, b)")
    cfg = rc.sim.to_dict()
    if args.paths:
        cfg["n_paths"] = args.paths
    if args.scheme:
        cfg["scheme"] = args.scheme
    if args.x0:
        cfg["x0"] = _floats(args.x0)
    if args.T:
        cfg["T"] = args.T
    if cfg.get("x0") is None:
        raise UsageError("a starting point is required (config x0 or --x0)")
    sc = SimConfig(**cfg)
    fn = simulate_euler if sc.scheme == "euler" else simulate_frozen
    batch = fn(net, sc, seed=seed, workers=args.workers)
    name = "trajectories." + args.format
    manifest.outputs.append(str(write_trajectories(batch, out / name, args.format).name))
    if args.plot:
        from .plots import plot_trajectories

        manifest.outputs.append(plot_trajectories(batch.times, batch.paths, out / "trajectories.svg").name)
    print(f"wrote {batch.n_paths} paths x {batch.times.size} times to {out / name}")
    return EXIT_OK


def cmd_density(args, rc, seed, out, manifest) -> int:
    from .cir import q_density
    from .semigroup import mixed_density_derivative

    grid = parse_grid(args.grid)
    if "t" not in grid:
        raise UsageError("grid must include t")
    rows = []
    if rc is not None and rc.mixed is not None:
        mm = rc.mixed
        xs = [f"x{k + 1}" for k in range(mm.dim)]
        ys = [f"y{k + 1}" for k in range(mm.dim)]
        missing = [a for a in xs + ys if a not in grid]
        if missing:
            raise UsageError(f"grid for the mixed model needs axes {missing}")
        axes = [grid["t"]] + [grid[a] for a in xs + ys]
        for combo in np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(axes)):
            t, pt = combo[0], combo[1:]
            v = mixed_density_derivative(mm, t, pt[: mm.dim], pt[mm.dim:], axis=0, order=args.deriv)
            rows.append(dict(zip(["t"] + xs + ys, combo.tolist()), value=v))
        cols = ["t"] + xs + ys + ["value"]
    else:
        p = _need(rc, "cir", "a 'cir' block")
        for a in ("x", "y"):
            if a not in grid:
                raise UsageError(f"grid must include {a}")
        for t in grid["t"]:
            for x in grid["x"]:
                for y in grid["y"]:
                    rows.append({"t": float(t), "x": float(x), "y": float(y),
                                 "value": q_density(p, t, x, y, deriv_order=args.deriv)})
        cols = ["t", "x", "y", "value"]
    name = "density." + args.format
    manifest.outputs.append(write_table(rows, cols, out / name, args.format).name)
    print(f"wrote {len(rows)} rows to {out / name}")
    return EXIT_OK


def cmd_resolvent(args, rc, seed, out, manifest) -> int:
    res_cfg = dict(rc.resolvent) if rc else {}
    lams = _floats(args.lam) if args.lam else res_cfg.get("lams", [1.0])
    tol = args.tol or res_cfg.get("tol", 1e-3)
    rows = []
    if rc is not None and rc.network is not None:
        from .simulator import SimConfig, resolvent_S_lambda

        fns_all = network_functions(rc.network.d)
        names = args.functions.split(",") if args.functions else res_cfg.get("functions", ["exp_sum"])
        unknown = [n for n in names if n not in fns_all]
        if unknown:
            raise UsageError(f"unknown functions {unknown}; available: {sorted(fns_all)}")
        cfg = rc.sim.to_dict()
        if args.paths:
            cfg["n_paths"] = args.paths
        if cfg.get("x0") is None:
            raise UsageError("a starting point is required (config x0)")
        res = resolvent_S_lambda(rc.network, SimConfig(**cfg), lams, {n: fns_all[n] for n in names}, tol,
                                 seed=seed, workers=args.workers)
        for (lam, name), est in res.items():
            rows.append({"lambda": lam, "function": name, "value": est.value, "std_error": est.std_error,
                         "n": est.n, "horizon": est.extra["horizon"]})
    else:
        from .semigroup import registered_functions, resolvent_Rlambda

        mm = _need(rc, "mixed", "a network or a 'mixed' block")
        fns_all = {k: v for k, v in registered_functions(mm.m).items() if v.sup is not None}
        names = args.functions.split(",") if args.functions else res_cfg.get("functions", ["exp_cat"])
        unknown = [n for n in names if n not in fns_all]
        if unknown:
            raise UsageError(f"unknown functions {unknown}; available: {sorted(fns_all)}")
        x0 = rc.raw.get("x0")
        if x0 is None:
            raise UsageError("a starting point is required (config x0)")
        for k, lam in enumerate(lams):
            for j, name in enumerate(names):
                g = rngmod.stream(seed, "resolvent/mixed", k * 1000 + j)
                est = resolvent_Rlambda(mm, lam, x0, fns_all[name], tol, g, n_paths=args.paths or 20000, seed=seed)
                rows.append({"lambda": lam, "function": name, "value": est.value, "std_error": est.std_error,
                             "n": est.n, "horizon": est.extra["horizon"]})
    name = "resolvent." + args.format
    manifest.outputs.append(write_table(rows, ["lambda", "function", "value", "std_error", "n", "horizon"],
                                        out / name, args.format).name)
    for r in rows:
        print(f"lambda={r['lambda']:g} {r['function']}: {r['value']:.6g} +- {r['std_error']:.2g}")
    return EXIT_OK


def cmd_derivative(args, rc, seed, out, manifest) -> int:
    from .semigroup import ibp_derivative, reference_Pt, registered_functions

    mm = _need(rc, "mixed", "a 'mixed' block")
    fns = registered_functions(mm.m)
    names = args.functions.split(",")
    unknown = [n for n in names if n not in fns]
    if unknown:
        raise UsageError(f"unknown functions {unknown}; available: {sorted(fns)}")
    rows, idx = [], 0
    for t in _floats(args.t):
        for z2 in _floats(args.z):
            z = np.zeros(mm.dim)
            z[: mm.m] = -np.asarray(mm.b0) * t
            z[-1] = z2
            for name in names:
                g = rngmod.stream(seed, "derivative", idx)
                idx += 1
                res = ibp_derivative(mm, t, z, fns[name], args.draws, g)
                try:
                    h = 1e-4
                    e = np.zeros(mm.dim)
                    e[-1] = h
                    ref = (reference_Pt(mm, t, z + e, fns[name]) - reference_Pt(mm, t, z - e, fns[name])) / (2 * h)
                except ValueError:
                    ref = 1.0 if name == "cat" else float("nan")
                rows.append({"t": t, "z": z2, "function": name, "main": res.main.value,
                             "std_error": res.main.std_error, "reference": ref, "bias_bound": res.bias_bound})
    name = "derivative." + args.format
    cols = ["t", "z", "function", "main", "std_error", "reference", "bias_bound"]
    manifest.outputs.append(write_table(rows, cols, out / name, args.format).name)
    print(f"wrote {len(rows)} rows to {out / name}")
    return EXIT_OK


def cmd_verify(args, rc, seed, out, manifest) -> int:
    from .harness import CATALOG, CheckSpec, run_suite

    if args.checks:
        ids = [c.strip() for c in args.checks.split(",") if c.strip()]
        specs = [CheckSpec(c, {}, seed) for c in ids]
    elif rc is not None and rc.checks:
        specs = [CheckSpec(c["check_id"], dict(c.get("params", {})), seed) for c in rc.checks]
    else:
        specs = [CheckSpec(c, {}, seed) for c in CATALOG]
    unknown = [s.check_id for s in specs if s.check_id not in CATALOG]
    if unknown:
        raise UsageError(f"unknown checks {unknown}; run list-checks")
    summary = run_suite(specs, parallelism=args.workers)
    for r in summary.reports:
        manifest.outputs.append(str(write_json(r.to_dict(), out / "reports" / f"{r.check_id}.json").relative_to(out)))
    rows = [{"check_id": r.check_id, "passed": r.passed, "runtime": round(r.runtime, 3), "anchor": r.anchor}
            for r in summary.reports]
    name = "summary." + args.format
    manifest.outputs.append(write_table(rows, ["check_id", "passed", "runtime", "anchor"], out / name,
                                        args.format).name)
    print(summary.table())
    return EXIT_OK if summary.passed else EXIT_FAIL


def cmd_list_checks(args, rc, seed, out, manifest) -> int:
    from .harness import list_checks

    items = list_checks()
    if args.format == "json":
        print(json.dumps(items, sort_keys=True, indent=2))
    else:
        for it in items:
            print(f"{it['check_id']:28s} {it['anchor']}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "density": cmd_density, "resolvent": cmd_resolvent,
    "derivative": cmd_derivative, "verify": cmd_verify, "list-checks": cmd_list_checks,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        seed = rngmod.resolve_seed(args.seed)
        if seed < 0:
            raise UsageError("seed must be non-negative")
        if args.workers < 1:
            raise UsageError("workers must be at least 1")
        rc = load_config(args.config) if args.config else None
        out = Path(args.out_dir)
        manifest = None
        if args.command != "list-checks":
            out.mkdir(parents=True, exist_ok=True)
            manifest = RunManifest(command=args.command, seed=seed,
                                   config_hash=config_hash(rc.raw) if rc else config_hash({}), argv=argv)
        code = COMMANDS[args.command](args, rc, seed, out, manifest)
        if manifest is not None:
            manifest.finish()
            manifest.write(out)
        return code
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
