"""Command line entry point.

Usage::

    fracshe <kind> [config.json] [--out DIR] [--workers N] [--scale full|quick]
    fracshe run --kind <kind> [config.json] ...

The exit status is 0 only when every contract of the run passed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
import traceback

import numpy as np

from . import __version__, battery, clt, noise
from .config import KINDS, ConfigError, ExperimentConfig, load_and_validate
from .io import RunDirectory
from .solver import simulate

log = logging.getLogger("fracshe")

EXIT_FAIL = 1
EXIT_ERROR = 2
WORKERS_ENV = "FRACSHE_WORKERS"


# ---------------------------------------------------------------------------
# per-kind runners: each returns (contracts, ensembles)


def _kernel(cfg: ExperimentConfig, workers):
    if cfg["scale"] == "quick":
        return [battery.kernel_suite(alphas=(1.5,), times=(1.0,), dims=(1,))], {}
    return [battery.kernel_suite()], {}


def _noise(cfg: ExperimentConfig, workers):
    if cfg.model is None:
        return [battery.noise_suite(n_draws=max(cfg["replicas"], 10_000 if cfg["scale"] == "full" else 2000),
                                    seed=cfg["seed"])], {}
    grid = cfg.grid or noise_default_grid(cfg.model.dim)
    n = cfg["replicas"] if cfg["replicas"] > 1 else 10_000
    chk = noise.validate_sampler(grid, cfg.model, n_draws=n, seed=cfg["seed"])
    z = cfg.tolerance("z_bound", 3.0)
    c = battery.Contract("noise_sampler", 2, chk.max_abs_z <= z, {"max_abs_z": chk.max_abs_z},
                         {"max_abs_z": z, "draws": n}, {"rows": chk.rows})
    return [c], {}


def noise_default_grid(dim):
    from .grid import GridSpec
    return GridSpec(1, 64.0, 1024) if dim == 1 else GridSpec(2, 16.0, 128)


def _simulate(cfg: ExperimentConfig, workers):
    sc = cfg.solver_config()
    traj = simulate(sc)
    u = traj.fields
    n = u.shape[0]
    o = (cfg.grid.origin_index,) * cfg.grid.dim
    mean = u.reshape(n, len(traj.times), -1).mean(axis=(0, 2))
    pt = u[(slice(None), slice(None)) + o]
    se = pt.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(len(traj.times), np.inf)
    z = (pt.mean(axis=0) - 1.0) / se
    ok = not traj.failures and bool(np.all(np.abs(z) <= 4.0))
    c = battery.Contract("simulate", 0, ok,
                         {"mean_at_origin_z": z, "field_mean": mean, "failures": len(traj.failures)},
                         {"mean_z_within": 4.0},
                         {"times": traj.times, "failures": traj.failures})
    c.arrays = {"fields": (u, {"times": list(traj.times), "replica_ids": traj.replica_ids.tolist(),
                               "grid": cfg.grid.to_dict(), "seed": cfg["seed"]})}
    return [c], {}


def _ensemble(cfg: ExperimentConfig, workers):
    sc = cfg.solver_config()
    radii = np.asarray(cfg["radii"])
    return clt.run_ensemble(sc, radii, cfg["times"], workers=workers)


def _constants(cfg: ExperimentConfig, workers):
    ens = {}
    if "solver" in cfg.data:
        data = dict(cfg.data)
        if "radii" not in data:
            data["radii"] = [4 * cfg.grid.spacing]
        if "times" not in data:
            data["times"] = [cfg["solver"]["T"]]
        ens["config"] = _ensemble(ExperimentConfig(data), workers)
    c = battery.constants_contract(ens)
    for name, s in ens.items():
        c.detail[f"{name}_constants"] = s.constants().to_dict()
    return [c], ens


def _clt(cfg: ExperimentConfig, workers):
    s = _ensemble(cfg, workers)
    ens = {"config": s}
    t = max(cfg["times"])
    tol = cfg["tolerances"]
    out = [battery.limiting_covariance_contract(ens, t, tol=tol)]
    if len(s.radii) >= 3:
        vs = clt.variance_scaling(s, t)
        vs.tolerance = cfg.tolerance("variance_slope", vs.tolerance)
        out.insert(0, battery.Contract("variance_scaling", 4, vs.passed, {"slope": vs.slope},
                                       {"slope": vs.target, "band": vs.tolerance},
                                       {"slope_ci": vs.slope_ci, "variance": vs.variance,
                                        "variance_se": vs.variance_se, "notes": vs.notes}))
        if s.n_replicas >= 200:
            out.append(battery.distance_contract(ens, t))
    return out, ens


def _fclt(cfg: ExperimentConfig, workers):
    s = _ensemble(cfg, workers)
    return [battery.fclt_contract({"config": s}, tol=cfg["tolerances"])], {"config": s}


def _tightness(cfg: ExperimentConfig, workers):
    if cfg.model is None:
        return [battery.tightness_contract(tol=cfg["tolerances"])], {}
    times = sorted(set(cfg.get("times") or [cfg["solver"]["T"]]) | {0.0})
    pairs = [(t, s) for t in times for s in times if s < t]
    rep = clt.tightness_check(cfg.model, cfg["solver"]["alpha"], cfg["radii"], pairs)
    rep.threshold = cfg.tolerance("tightness_spread", rep.threshold)
    c = battery.Contract("tightness", 8, rep.passed, {"spread": rep.spread},
                         {"spread_below": rep.threshold},
                         {"rows": rep.rows, "doubling_gap": rep.doubling_gap})
    return [c], {}


def _inequalities(cfg: ExperimentConfig, workers):
    return [battery.inequality_contract(2000 if cfg["scale"] == "full" else 200)], {}


def _all(cfg: ExperimentConfig, workers):
    return battery.run_battery(cfg["scale"], workers, tol=cfg["tolerances"])


RUNNERS = {"kernel": _kernel, "noise-validate": _noise, "simulate": _simulate, "constants": _constants,
           "clt": _clt, "fclt": _fclt, "tightness": _tightness, "inequalities": _inequalities,
           "all": _all}


# ---------------------------------------------------------------------------
# persistence


def _rows_table(rows):
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    return keys, [[_flat(r.get(k, "")) for k in keys] for r in rows]


def _flat(v):
    v = battery._jsonable(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def write_outputs(run: RunDirectory, cfg: ExperimentConfig, contracts, ensembles):
    run.write_json("verdict.json", {
        "config_hash": cfg.hash, "kind": cfg.kind, "tool_version": __version__,
        "passed": all(c.passed for c in contracts),
        "contracts": [c.to_dict() for c in contracts]})
    run.write_csv("summary.csv", ["criterion", "contract", "passed"],
                  [[c.criterion, c.name, int(bool(c.passed))] for c in contracts])
    for c in contracts:
        tables = {"": c.detail.get("rows")}
        for k, v in c.detail.items():
            if isinstance(v, dict) and isinstance(v.get("rows"), list):
                tables[k] = v["rows"]
        for suffix, rows in tables.items():
            if isinstance(rows, list) and rows and all(isinstance(r, dict) for r in rows):
                header, body = _rows_table(rows)
                run.write_csv(f"tables/{c.name}{'_' + suffix if suffix else ''}.csv", header, body)
        for name, (arr, meta) in getattr(c, "arrays", {}).items():
            run.write_array(f"raw/{c.name}_{name}", arr, **meta)
    for name, s in ensembles.items():
        meta = {"radii": s.radii.tolist(), "times": s.times.tolist(), "alpha": s.alpha,
                "model": s.model.to_dict(), "axes": ["replica", "time", "radius"]}
        run.write_array(f"raw/{name}_ball_averages", s.values, **meta)
        run.write_array(f"raw/{name}_replica_ids", s.replica_ids.astype(np.int64))
        run.write_array(f"raw/{name}_mean_sigma", s.mean_sigma,
                        moment_times=s.moment_times.tolist(), axes=["time", "replica"])
        if s.cross_sigma is not None:
            run.write_array(f"raw/{name}_cross_sigma", s.cross_sigma,
                            moment_times=s.moment_times.tolist(), axes=["time", "replica"])
        k = s.time_index(max(s.times))
        var = s.values[:, k, :].var(axis=0, ddof=1)
        run.write_csv(f"tables/{name}_variance.csv", ["radius", "t", "variance", "replicas"],
                      [[R, float(s.times[k]), v, s.n_replicas] for R, v in zip(s.radii, var)])


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracshe", description="Fractional stochastic heat equation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", nargs="?", help="JSON experiment configuration")
        sp.add_argument("--out", help="output root (overrides $FRACSHE_OUTPUT_ROOT)")
        sp.add_argument("--workers", type=int, help=f"worker processes (overrides config and ${WORKERS_ENV})")
        sp.add_argument("--scale", choices=("full", "quick"), help="battery size for built-in batteries")
        sp.add_argument("-v", "--verbose", action="store_true")

    for k in KINDS:
        common(sub.add_parser(k, help=f"run the {k} experiment"))
    run = sub.add_parser("run", help="run the experiment named by --kind")
    run.add_argument("--kind", required=True, choices=KINDS)
    common(run)
    return p


def _load(args) -> ExperimentConfig:
    kind = args.kind if args.command == "run" else args.command
    raw = {"kind": kind}
    if args.config:
        with open(args.config) as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError([f"parse: {e}"]) from None
        if not isinstance(raw, dict):
            raise ConfigError(["schema: <root>: config must be a JSON object"])
        if raw.get("kind", kind) != kind:
            raise ConfigError([f"config kind {raw.get('kind')!r} does not match subcommand {kind!r}"])
        raw.setdefault("kind", kind)
    if args.scale:
        raw = dict(raw, scale=args.scale)
    return load_and_validate(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as e:
        print(str(e), file=sys.stderr)
        return EXIT_ERROR
    workers = args.workers or int(os.environ.get(WORKERS_ENV, 0)) or cfg["workers"]
    run = RunDirectory(cfg.hash, args.out or cfg["output_dir"])
    run.write_json("config.json", cfg.data)
    t0 = time.perf_counter()
    contracts, ensembles, error = [], {}, None
    try:
        contracts, ensembles = RUNNERS[cfg.kind](cfg, workers)
    except Exception as e:  # keep partial results and mark the manifest incomplete
        error = f"{type(e).__name__}: {e}"
        log.error("run failed: %s\n%s", error, traceback.format_exc())
    wall = time.perf_counter() - t0
    if contracts or ensembles:
        write_outputs(run, cfg, contracts, ensembles)
    run.write_json("runtime.json", {
        "wall_seconds": round(wall, 3), "workers": workers, "tool_version": __version__,
        "python": platform.python_version(), "numpy": np.__version__, "cpu_count": os.cpu_count(),
        "contract_seconds": {c.name: round(c.seconds, 3) for c in contracts}, "error": error})
    run.write_manifest(complete=error is None, note=error)
    for c in contracts:
        print(c.line())
    print(f"run directory: {run.path}")
    if error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_ERROR
    return 0 if contracts and all(c.passed for c in contracts) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
