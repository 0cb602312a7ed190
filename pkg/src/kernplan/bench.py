"""Paired-trial benchmark harness: shared-seed trials over conditions and
systems, bootstrap confidence intervals, safety rates, and CSV emission.

Determinism contract: two runs with the same base seed produce byte-identical
trial logs and figure CSVs. Wall-clock timing is inherently non-deterministic,
so every timing value lives in dedicated sidecar files (``timings.csv``,
``timing_summary.csv``, ``fig6_safety_time.csv``) that are excluded from that
guarantee; all other outputs are covered.

Scoring: every condition is judged on the shielded trajectory its planner
returns — for the dynamics-based planner that is an executed rollout, for
the library planners the shielded kernel state estimate. The model-free
planners never touch the dynamics, so their plans cannot be re-simulated
without breaking the model-free premise; the planner-reported shielded
trajectory is the common yardstick.

A trial counts as "safe" when the shield never intervened, i.e. the planner
never proposed a violating state — a feasibility measure. (Shield outputs
themselves are always in the safe set, so a raw output-safety rate would be
100% by construction and carry no information.)
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bsd import BsdConfig, KernelParams, TrajectoryLibrary, bsd_plan, nn_plan
from .dynamics import SystemSpec
from .errors import ConfigError, ParameterError
from .mbd import MbdConfig, mbd_plan
from .numcore import RngStream, make_schedule
from .parking import build_scene, sample_initial_state

CONDITIONS = ("mbd", "bsd_fix", "bsd", "nn")
STATE_DIM = {"bicycle": 3, "tt2d": 4, "ntrailer": 5, "acctt2d": 6}


@dataclass
class TrialRecord:
    system_id: str
    condition: str
    seed: int
    reward: float
    safe: bool
    interventions: int
    plan_time_ms: float
    initial_state: list
    goal_index: int
    scene_json: str = ""

    def log_dict(self) -> dict:
        """Deterministic view: everything except wall-clock timing."""
        d = asdict(self)
        d.pop("plan_time_ms")
        return d


def _planner_configs(n_diffuse: int, k_candidates: int, temperature: float,
                     kernel: KernelParams):
    schedule = make_schedule(max(n_diffuse, 2))
    mbd_cfg = MbdConfig(n_diffuse=n_diffuse, k_candidates=k_candidates,
                        temperature=temperature, schedule=schedule)
    fixed = BsdConfig(n_diffuse=n_diffuse, k_candidates=k_candidates,
                      temperature=temperature, schedule=schedule,
                      kernel=KernelParams(nu_x=kernel.nu_x, nu_g=kernel.nu_g,
                                          eta=kernel.eta, c=kernel.c,
                                          gamma=kernel.gamma, mode="fixed",
                                          dim_power=kernel.dim_power))
    adaptive = BsdConfig(n_diffuse=n_diffuse, k_candidates=k_candidates,
                         temperature=temperature, schedule=schedule,
                         kernel=KernelParams(nu_x=kernel.nu_x, nu_g=kernel.nu_g,
                                             eta=kernel.eta, c=kernel.c,
                                             gamma=kernel.gamma, mode="adaptive",
                                             dim_power=kernel.dim_power))
    return {"mbd": mbd_cfg, "bsd_fix": fixed, "bsd": adaptive, "nn": kernel}


def run_trials(systems, conditions, n_trials: int, base_seed: int,
               libraries: dict, n_diffuse: int = 100, k_candidates: int = 20000,
               temperature: float = 0.05, kernel: KernelParams | None = None,
               sink=None, skip=None) -> list:
    """Run the paired protocol.

    Trial t of every condition shares the same (initial state, goal); each
    condition consumes its own planner-noise stream, so conditions differ
    only in method. ``sink(record)`` is called after each finished trial for
    incremental persistence; (system, condition, seed) triples listed in
    ``skip`` are not re-run (resume support).
    """
    skip = skip or set()
    kernel = kernel or KernelParams()
    for cond in conditions:
        if cond not in CONDITIONS:
            raise ParameterError(f"unknown condition {cond!r}")
    data_conditions = [c for c in conditions if c != "mbd"]
    for system in systems:
        if data_conditions and system.system_id not in libraries:
            raise ConfigError(f"missing trajectory library for {system.system_id}")

    cfgs = _planner_configs(n_diffuse, k_candidates, temperature, kernel)
    records = []
    for system in systems:
        library = libraries.get(system.system_id)
        for t in range(n_trials):
            stream = RngStream(base_seed).child("trial", system.system_id, t)
            goal = int(stream.child("goal").generator().integers(16))
            scene = build_scene(goal, None, system)
            x0 = sample_initial_state(scene, system, stream.child("init"))
            for cond in conditions:
                if (system.system_id, cond, t) in skip:
                    continue
                t0 = time.perf_counter()
                if cond == "mbd":
                    res = mbd_plan(x0, scene, system, cfgs["mbd"],
                                   stream.child("plan", cond))
                elif cond == "nn":
                    res = nn_plan(x0, scene, system, library, cfgs["nn"])
                else:
                    res = bsd_plan(x0, scene, system, library, cfgs[cond],
                                   stream.child("plan", cond))
                rec = TrialRecord(
                    system_id=system.system_id, condition=cond, seed=t,
                    reward=res.reward, safe=res.interventions == 0,
                    interventions=int(res.interventions),
                    plan_time_ms=1000.0 * (time.perf_counter() - t0),
                    initial_state=x0.tolist(), goal_index=goal,
                    scene_json=scene.to_json())
                records.append(rec)
                if sink is not None:
                    sink(rec)
    return records


def bootstrap_ci(samples, n_resamples: int = 10000, level: float = 0.95,
                 rng: RngStream | None = None):
    """Seeded percentile bootstrap of the mean."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ParameterError("samples must be non-empty")
    if not 0 < level < 1:
        raise ParameterError("level must be in (0, 1)")
    rng = rng or RngStream(0).child("bootstrap")
    gen = rng.generator()
    idx = gen.integers(samples.size, size=(n_resamples, samples.size))
    means = samples[idx].mean(axis=1)
    alpha = (1 - level) / 2
    lo, hi = np.quantile(means, [alpha, 1 - alpha])
    return float(lo), float(hi)


def pearson(a, b) -> float:
    """Product-moment correlation; errors on degenerate input."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise ParameterError("need two equal-length vectors of size >= 2")
    if np.std(a) == 0 or np.std(b) == 0:
        raise ParameterError("pearson undefined for zero-variance input")
    return float(np.corrcoef(a, b)[0, 1])


def wilson_interval(successes: int, n: int, level: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        raise ParameterError("n must be positive")
    z = {0.95: 1.959963984540054, 0.99: 2.5758293035489004}.get(
        level, abs(np.sqrt(2) * _erfinv(level)))
    p = successes / n
    denom = 1 + z ** 2 / n
    center = (p + z ** 2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z ** 2 / (4 * n ** 2)) / denom
    return float(center - half), float(center + half)


def _erfinv(level):
    from math import erf
    lo, hi = 0.0, 10.0
    target = level
    for _ in range(80):
        mid = (lo + hi) / 2
        if erf(mid) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


@dataclass
class CellStats:
    mean: float
    std: float
    ci_lo: float
    ci_hi: float
    safety_rate: float
    safety_ci: tuple
    mean_time_ms: float
    n: int


@dataclass
class SummaryTable:
    cells: dict                      # (system_id, condition) -> CellStats
    ratios: dict                     # (system_id, condition) -> mean / mbd mean
    paired_pearson: dict             # system_id -> r over (mbd, bsd_fix) rewards


def _group(records):
    by_cell = {}
    for r in records:
        by_cell.setdefault((r.system_id, r.condition), []).append(r)
    return by_cell


def summarize(records, n_resamples: int = 10000, level: float = 0.95,
              base_seed: int = 0) -> SummaryTable:
    """Aggregate trial records; pure function of its inputs."""
    by_cell = _group(records)
    cells, ratios, paired = {}, {}, {}
    for (sys_id, cond), recs in sorted(by_cell.items()):
        recs = sorted(recs, key=lambda r: r.seed)
        rewards = np.array([r.reward for r in recs])
        safe = sum(r.safe for r in recs)
        ci = (bootstrap_ci(rewards, n_resamples, level,
                           RngStream(base_seed).child("ci", sys_id, cond))
              if len(rewards) > 1 else (float(rewards[0]), float(rewards[0])))
        cells[(sys_id, cond)] = CellStats(
            mean=float(rewards.mean()), std=float(rewards.std(ddof=0)),
            ci_lo=ci[0], ci_hi=ci[1],
            safety_rate=safe / len(recs),
            safety_ci=wilson_interval(safe, len(recs), level),
            mean_time_ms=float(np.mean([r.plan_time_ms for r in recs])),
            n=len(recs))
    systems = sorted({s for s, _ in cells})
    for sys_id in systems:
        if (sys_id, "mbd") not in cells:
            continue
        mbd_mean = cells[(sys_id, "mbd")].mean
        for cond in CONDITIONS:
            if (sys_id, cond) in cells and mbd_mean != 0:
                ratios[(sys_id, cond)] = cells[(sys_id, cond)].mean / mbd_mean
        pair = _paired_rewards(by_cell, sys_id, "mbd", "bsd_fix")
        if pair is not None:
            try:
                paired[sys_id] = pearson(pair[0], pair[1])
            except ParameterError:
                paired[sys_id] = float("nan")
    return SummaryTable(cells=cells, ratios=ratios, paired_pearson=paired)


def _paired_rewards(by_cell, sys_id, cond_a, cond_b):
    a = by_cell.get((sys_id, cond_a))
    b = by_cell.get((sys_id, cond_b))
    if not a or not b:
        return None
    a = {r.seed: r.reward for r in a}
    b = {r.seed: r.reward for r in b}
    seeds = sorted(set(a) & set(b))
    if len(seeds) < 2:
        return None
    return (np.array([a[s] for s in seeds]), np.array([b[s] for s in seeds]))


def _ratio_error(missing):
    raise ConfigError(f"cannot compute ratios: missing mbd cell for {missing}")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_trial_log(records, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "trials.ndjson", "w") as f:
        for r in sorted(records, key=lambda r: (r.system_id, r.condition, r.seed)):
            f.write(json.dumps(r.log_dict()) + "\n")
    _write_csv(out_dir / "timings.csv",
               ["system", "condition", "seed", "plan_time_ms"],
               [(r.system_id, r.condition, r.seed, r.plan_time_ms)
                for r in sorted(records, key=lambda r: (r.system_id, r.condition, r.seed))])


def export_figures(records, out_dir, n_resamples: int = 10000,
                   base_seed: int = 0) -> SummaryTable:
    """Write table1.csv plus one CSV per figure. Returns the summary.

    Timing-bearing files (timing_summary.csv, fig6_safety_time.csv) are the
    only non-deterministic outputs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = summarize(records, n_resamples=n_resamples, base_seed=base_seed)
    by_cell = _group(records)
    systems = sorted({s for s, _ in table.cells}, key=lambda s: STATE_DIM[s])
    conds = [c for c in CONDITIONS if any((s, c) in table.cells for s in systems)]

    need_ratio = [s for s in systems
                  if len([c for c in conds if (s, c) in table.cells]) > 1
                  and (s, "mbd") not in table.cells]
    if need_ratio:
        _ratio_error(need_ratio)

    rows = []
    for s in systems:
        for c in conds:
            if (s, c) not in table.cells:
                continue
            cs = table.cells[(s, c)]
            rows.append((s, c, cs.n, cs.mean, cs.std, cs.ci_lo, cs.ci_hi,
                         cs.safety_rate, cs.safety_ci[0], cs.safety_ci[1]))
    _write_csv(out_dir / "table1.csv",
               ["system", "condition", "n_trials", "reward_mean", "reward_std",
                "ci_lo", "ci_hi", "safety_rate", "safety_ci_lo", "safety_ci_hi"],
               rows)
    _write_csv(out_dir / "timing_summary.csv",
               ["system", "condition", "mean_time_ms"],
               [(s, c, table.cells[(s, c)].mean_time_ms)
                for s in systems for c in conds if (s, c) in table.cells])
    _write_csv(out_dir / "fig2_means.csv",
               ["system", "condition", "reward_mean", "ci_lo", "ci_hi"],
               [(s, c, table.cells[(s, c)].mean, table.cells[(s, c)].ci_lo,
                 table.cells[(s, c)].ci_hi)
                for s in systems for c in conds if (s, c) in table.cells])
    _write_csv(out_dir / "fig3_ratio_vs_dim.csv",
               ["system", "state_dim", "condition", "ratio_vs_mbd"],
               [(s, STATE_DIM[s], c, table.ratios[(s, c)])
                for s in systems for c in conds if (s, c) in table.ratios])
    _write_csv(out_dir / "fig4_per_trial.csv",
               ["system", "condition", "seed", "reward", "safe"],
               [(r.system_id, r.condition, r.seed, r.reward, r.safe)
                for r in sorted(records,
                                key=lambda r: (STATE_DIM[r.system_id],
                                               r.condition, r.seed))])
    fig5_rows = []
    for s in systems:
        pair = _paired_rewards(by_cell, s, "mbd", "bsd_fix")
        if pair is None:
            continue
        r = table.paired_pearson.get(s, float("nan"))
        for seed, (ra, rb) in enumerate(zip(*pair)):
            fig5_rows.append((s, seed, ra, rb, r))
    _write_csv(out_dir / "fig5_paired.csv",
               ["system", "seed", "mbd_reward", "bsd_fix_reward", "pearson_r"],
               fig5_rows)
    _write_csv(out_dir / "fig6_safety_time.csv",
               ["system", "condition", "safety_rate", "mean_time_ms"],
               [(s, c, table.cells[(s, c)].safety_rate,
                 table.cells[(s, c)].mean_time_ms)
                for s in systems for c in conds if (s, c) in table.cells])
    return table


DETERMINISTIC_OUTPUTS = ("trials.ndjson", "table1.csv", "fig2_means.csv",
                         "fig3_ratio_vs_dim.csv", "fig4_per_trial.csv",
                         "fig5_paired.csv")
