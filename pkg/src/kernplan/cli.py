"""Command-line entry point.

Subcommands: ``datagen`` (collect a trajectory library), ``plan`` (single
planning run, prints the result as JSON), ``eval`` (full paired-trial
protocol + CSV export), ``theory`` (run the theory checks).

Exit codes: 0 success, 1 check failure, 2 usage/config error. Every command
writes ``run_meta.json`` (config hash, seed, version, per-parameter
provenance) next to its outputs. The ``KERNPLAN_OUT_DIR`` environment
variable overrides the default output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench, datastore, dynamics, theory
from .bsd import BsdConfig, KernelParams, bsd_plan, nn_plan
from .config import ALL_SYSTEMS, RunConfig, load_config
from .errors import KernplanError
from .mbd import MbdConfig, mbd_plan
from .numcore import RngStream, make_schedule
from .parking import build_scene, sample_initial_state

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _out_dir(arg_value, default) -> Path:
    base = arg_value or os.environ.get("KERNPLAN_OUT_DIR") or default
    p = Path(base)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_meta(out_dir: Path, cfg: RunConfig, command: str) -> None:
    meta = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "base_seed": cfg.base_seed,
        "version": __version__,
        "numpy_version": np.__version__,
        "config": cfg.tagged_dict(),
    }
    with open(out_dir / "run_meta.json", "w") as f:
        json.dump(meta, f, indent=2, default=list)


def _make_system(cfg: RunConfig, system_id: str):
    return dynamics.make_system(system_id, dt=cfg.dt, horizon=cfg.horizon)


def _kernel(cfg: RunConfig) -> KernelParams:
    return KernelParams(nu_x=cfg.nu_x, nu_g=cfg.nu_g, eta=cfg.eta,
                        c=cfg.bandwidth_c, gamma=cfg.gamma,
                        dim_power=cfg.dim_power)


def _schedule(cfg: RunConfig, n_steps: int):
    return make_schedule(n_steps, cfg.sigma_max, cfg.sigma_min)


def cmd_datagen(args) -> int:
    cfg = load_config(args.config, args.profile, _overrides(args))
    out = Path(args.out) if args.out else None
    systems = [args.system] if args.system else list(cfg.systems)
    out_dir = _out_dir(None, "libraries") if out is None else out.parent
    _write_meta(out_dir, cfg, "datagen")
    mbd_cfg = MbdConfig(n_diffuse=cfg.datagen_n_diffuse,
                        k_candidates=cfg.datagen_k,
                        temperature=cfg.temperature,
                        schedule=_schedule(cfg, cfg.datagen_n_diffuse))
    for system_id in systems:
        system = _make_system(cfg, system_id)
        path = out if out is not None else out_dir / f"{system_id}.ndjson"
        print(f"collecting {cfg.library_size} records for {system_id} ...",
              flush=True)
        lib = datastore.collect_library(
            system, cfg.library_size, cfg.base_seed, mbd_cfg,
            min_reward=cfg.min_reward,
            progress=lambda k, n: print(f"  {k}/{n}", flush=True)
            if k % max(1, n // 10) == 0 else None)
        datastore.save_library(lib, path)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = load_config(args.config, args.profile, _overrides(args))
    if args.dry_run:
        print(json.dumps({"config_ok": True, "config_hash": cfg.config_hash()}))
        return EXIT_OK
    system = _make_system(cfg, args.system)
    stream = RngStream(cfg.base_seed).child("trial", args.system, args.seed)
    goal = int(stream.child("goal").generator().integers(16))
    scene = build_scene(goal, None, system)
    x0 = sample_initial_state(scene, system, stream.child("init"))
    plan_rng = stream.child("plan", args.condition)

    if args.condition == "mbd":
        res = mbd_plan(x0, scene, system,
                       MbdConfig(n_diffuse=cfg.n_diffuse,
                                 k_candidates=cfg.k_candidates,
                                 temperature=cfg.temperature,
                                 schedule=_schedule(cfg, cfg.n_diffuse)),
                       plan_rng)
    else:
        if not args.library:
            print("error: --library is required for data-driven conditions",
                  file=sys.stderr)
            return EXIT_USAGE
        library = datastore.load_library(args.library, expected_system=system)
        if args.condition == "nn":
            res = nn_plan(x0, scene, system, library, _kernel(cfg))
        else:
            kernel = _kernel(cfg)
            if args.condition == "bsd":
                kernel = KernelParams(nu_x=kernel.nu_x, nu_g=kernel.nu_g,
                                      eta=kernel.eta, c=kernel.c,
                                      gamma=kernel.gamma, mode="adaptive",
                                      dim_power=kernel.dim_power)
            res = bsd_plan(x0, scene, system, library,
                           BsdConfig(n_diffuse=cfg.n_diffuse,
                                     k_candidates=cfg.k_candidates,
                                     temperature=cfg.temperature,
                                     kernel=kernel,
                                     schedule=_schedule(cfg, cfg.n_diffuse)),
                           plan_rng)
    print(json.dumps({
        "system": args.system, "condition": args.condition, "seed": args.seed,
        "goal_index": goal, "reward": res.reward,
        "interventions": res.interventions, "safe": res.interventions == 0,
        "wall_time_ms": res.wall_time_ms,
        "controls": res.controls.tolist(), "states": res.states.tolist(),
    }))
    return EXIT_OK


def _load_existing_trials(out_dir: Path):
    trials_path = out_dir / "trials.ndjson"
    if not trials_path.exists():
        return []
    timing = {}
    timing_path = out_dir / "timings.csv"
    if timing_path.exists():
        with open(timing_path) as f:
            for row in csv.DictReader(f):
                timing[(row["system"], row["condition"], int(row["seed"]))] = \
                    float(row["plan_time_ms"])
    records = []
    with open(trials_path) as f:
        for line in f:
            d = json.loads(line)
            key = (d["system_id"], d["condition"], d["seed"])
            records.append(bench.TrialRecord(plan_time_ms=timing.get(key, 0.0), **d))
    return records


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.profile, _overrides(args))
    out_dir = _out_dir(args.out_dir, "results")
    _write_meta(out_dir, cfg, "eval")
    lib_dir = Path(args.libraries) if args.libraries else Path("libraries")
    systems = [_make_system(cfg, s) for s in cfg.systems]
    libraries = {}
    if any(c != "mbd" for c in cfg.conditions):
        for s in systems:
            path = lib_dir / f"{s.system_id}.ndjson"
            if not path.exists():
                print(f"error: missing library {path}", file=sys.stderr)
                return EXIT_USAGE
            libraries[s.system_id] = datastore.load_library(path, expected_system=s)

    done = []
    skip = set()
    if args.resume:
        done = _load_existing_trials(out_dir)
        skip = {(r.system_id, r.condition, r.seed) for r in done}
        if skip:
            print(f"resuming: {len(skip)} trials already complete", flush=True)

    fresh = bench.run_trials(
        systems, cfg.conditions, cfg.n_trials, cfg.base_seed, libraries,
        n_diffuse=cfg.n_diffuse, k_candidates=cfg.k_candidates,
        temperature=cfg.temperature, kernel=_kernel(cfg), skip=skip,
        sink=lambda r: print(f"  {r.system_id}/{r.condition} trial {r.seed}: "
                             f"reward {r.reward:.3f}", flush=True))
    records = done + fresh
    bench.write_trial_log(records, out_dir)
    bench.export_figures(records, out_dir, n_resamples=cfg.n_resamples,
                         base_seed=cfg.base_seed)
    print(f"wrote results to {out_dir}")
    return EXIT_OK


def cmd_theory(args) -> int:
    cfg = load_config(args.config, args.profile, _overrides(args))
    out_dir = _out_dir(args.out_dir, "theory_out")
    _write_meta(out_dir, cfg, "theory")
    rng = RngStream(cfg.base_seed)
    A = np.array([[1.0, cfg.dt], [0.0, 1.0]])
    B = np.array([[0.0], [cfg.dt]])
    reports = {
        "deepc_equivalence": theory.deepc_equivalence_check(
            A, B, L=200, t_ini=4, horizon=10, rng=rng.child("deepc")),
        "consistency": theory.nw_consistency_check(
            n_grid=cfg.consistency_n_grid, n_seeds=cfg.consistency_seeds,
            rng=rng.child("consistency")),
        "mse_scaling": theory.mse_scaling_check(
            n_seeds=cfg.scaling_seeds, rng=rng.child("scaling")),
    }
    with open(out_dir / "theory_report.json", "w") as f:
        json.dump(reports, f, indent=2)
    with open(out_dir / "theory_report.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["check", "passed", "detail"])
        for name, rep in reports.items():
            detail = {k: v for k, v in rep.items()
                      if isinstance(v, (int, float, bool)) and k != "passed"}
            w.writerow([name, int(rep["passed"]), json.dumps(detail)])
    all_ok = all(rep["passed"] for rep in reports.values())
    for name, rep in reports.items():
        print(f"{name}: {'PASS' if rep['passed'] else 'FAIL'}")
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


def _overrides(args) -> dict:
    keys = ("n_trials", "k_candidates", "n_diffuse", "library_size",
            "base_seed", "threads")
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    if getattr(args, "systems", None):
        out["systems"] = tuple(args.systems.split(","))
    return out


def _add_common(p):
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--profile", choices=["smoke", "paper"],
                   help="scale (trials, K, steps, library) for CI vs full runs")
    p.add_argument("--seed", dest="base_seed", type=int, help="base seed override")
    p.add_argument("--n-trials", dest="n_trials", type=int)
    p.add_argument("--k", dest="k_candidates", type=int)
    p.add_argument("--n-diffuse", dest="n_diffuse", type=int)
    p.add_argument("--library-size", dest="library_size", type=int)
    p.add_argument("--systems", help="comma-separated system ids")
    p.add_argument("--threads", type=int,
                   help="worker count; results are independent of it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernplan",
        description="kernel-diffusion trajectory planning benchmark toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="collect a trajectory library")
    _add_common(p)
    p.add_argument("--system", choices=ALL_SYSTEMS,
                   help="single system (default: all configured systems)")
    p.add_argument("--out", help="output file (single system only)")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("plan", help="single planning run, prints JSON")
    _add_common(p)
    p.add_argument("--system", choices=ALL_SYSTEMS, required=True)
    p.add_argument("--condition", choices=bench.CONDITIONS, required=True)
    p.add_argument("--trial-seed", dest="seed", type=int, default=0)
    p.add_argument("--library", help="library file for data-driven conditions")
    p.add_argument("--dry-run", action="store_true",
                   help="validate the configuration and exit")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("eval", help="full paired-trial protocol")
    _add_common(p)
    p.add_argument("--out-dir", help="results directory")
    p.add_argument("--libraries", help="directory holding <system>.ndjson files")
    p.add_argument("--resume", action="store_true",
                   help="skip trials already present in the output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("theory", help="run all theory checks")
    _add_common(p)
    p.add_argument("--out-dir", help="report directory")
    p.set_defaults(func=cmd_theory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except KernplanError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
