"""Library planner: triple-kernel score estimation over a trajectory library.

At every denoising step the planner weights each stored trajectory by the
product of three Gaussian kernels (control proximity at the current noise
level, initial-state context, goal relevance) tilted by a normalized-reward
temperature, then draws K candidate records from those weights, shields their
stored state trajectories, and combines the drawn controls by reward softmax.

The whole path is model-free: no dynamics evaluation happens anywhere inside
``bsd_plan`` or ``nn_plan`` (enforced by poisoning the dynamics oracle for
the duration of the call).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import SystemSpec, wrap_angle
from .errors import DimensionError, ParameterError, UnsafeStateError
from .numcore import (NoiseSchedule, RngStream, WeightVector, draw_gaussian,
                      make_schedule, normalize_log_weights, reward_softmax)
from .parking import ParkingScene, goal_progress, reward_from_progress, safe_mask
from .results import PlanResult
from .shield import _forward_fill_indices

BANDWIDTH_MODES = ("fixed", "adaptive")


@dataclass(frozen=True)
class KernelParams:
    """Bandwidths and temperatures of the triple-kernel weighting.

    ``mode="fixed"`` keeps the control-space bandwidth at ``c * d**dim_power``
    for every step; ``mode="adaptive"`` couples it to the noise schedule as
    ``c * sigma**gamma * d**dim_power``.
    """

    nu_x: float = 2.0
    nu_g: float = 3.0
    eta: float = 10.0
    c: float = 0.15
    gamma: float = 0.5
    mode: str = "fixed"
    dim_power: float = 0.5

    def __post_init__(self):
        if self.nu_x <= 0 or self.nu_g <= 0 or self.c <= 0:
            raise ParameterError("bandwidths must be positive")
        if self.eta < 0:
            raise ParameterError("eta must be >= 0")
        if self.mode not in BANDWIDTH_MODES:
            raise ParameterError(f"mode must be one of {BANDWIDTH_MODES}")


@dataclass(frozen=True)
class TrajectoryRecord:
    controls: np.ndarray    # (H, n_u)
    states: np.ndarray      # (H+1, n_x)
    reward: float

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]


class TrajectoryLibrary:
    """Immutable dataset of (controls, states, reward) records."""

    def __init__(self, records, system: SystemSpec, provenance: dict | None = None):
        records = list(records)
        if not records:
            raise ParameterError("library must be non-empty")
        H, n_u = records[0].controls.shape
        for r in records:
            if r.controls.shape != (H, n_u) or r.states.shape != (H + 1, system.n_x):
                raise DimensionError("library records have inconsistent dimensions")
        self.records = records
        self.system = system
        self.provenance = dict(provenance or {})
        self.controls_arr = np.stack([r.controls for r in records])
        self.states_arr = np.stack([r.states for r in records])
        self.rewards_arr = np.array([r.reward for r in records], dtype=float)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def reward_stats(self):
        """(mean, min, max) over stored rewards."""
        r = self.rewards_arr
        return float(r.mean()), float(r.min()), float(r.max())

    def normalized_rewards(self) -> np.ndarray:
        """(r - mean) / (max - min); zeros when all rewards coincide."""
        mean, lo, hi = self.reward_stats
        if hi <= lo:
            return np.zeros(len(self))
        return (self.rewards_arr - mean) / (hi - lo)


def bandwidth(sigma_i: float, d: int, p: KernelParams) -> float:
    """Control-space kernel bandwidth at noise level ``sigma_i``."""
    if sigma_i <= 0:
        raise ParameterError("sigma_i must be positive")
    scale = d ** p.dim_power
    if p.mode == "adaptive":
        return p.c * sigma_i ** p.gamma * scale
    return p.c * scale


# metres of end-of-path displacement caused by one radian of heading error;
# puts angular channels on a length scale commensurate with position
ANGLE_METRIC_WEIGHT = 3.0


def _state_sqdist(states: np.ndarray, ref: np.ndarray, system: SystemSpec) -> np.ndarray:
    """Squared Euclidean distance with wrapped, length-scaled angles; (N,)."""
    diff = states - ref
    for ch in system.angle_channels:
        diff[:, ch] = ANGLE_METRIC_WEIGHT * wrap_angle(diff[:, ch])
    return np.einsum("nc,nc->n", diff, diff)


def _goal_sqdist(terminals: np.ndarray, goal: np.ndarray) -> np.ndarray:
    """Goal distance over the reward's channels: position + lead heading."""
    dp = terminals[:, :2] - goal[:2]
    dth = wrap_angle(terminals[:, 2] - goal[2])
    return np.einsum("nc,nc->n", dp, dp) + dth ** 2


def context_goal_reward_log_weights(library: TrajectoryLibrary, x0, goal,
                                    p: KernelParams) -> np.ndarray:
    """Sum of the context, goal and reward log-kernels (no diffusion term)."""
    x0 = np.asarray(x0, dtype=float)
    goal = np.asarray(goal, dtype=float)
    system = library.system
    lw = -_state_sqdist(library.states_arr[:, 0].copy(), x0, system) / (2 * p.nu_x ** 2)
    lw -= _goal_sqdist(library.states_arr[:, -1], goal) / (2 * p.nu_g ** 2)
    lw += p.eta * library.normalized_rewards()
    return lw


def kernel_log_weights(Y_i: np.ndarray, library: TrajectoryLibrary, x0, goal,
                       sigma_i: float, p: KernelParams) -> WeightVector:
    """Normalized triple-kernel weights of every library record."""
    d = Y_i.size
    beta = bandwidth(sigma_i, d, p)
    system = library.system
    # per-channel normalization keeps wide channels from dominating the metric
    scale = 0.5 * (system.control_high - system.control_low)
    diff = (library.controls_arr - Y_i[None]) / scale
    lw = -np.einsum("nhu,nhu->n", diff, diff) / (2 * beta ** 2)
    lw += context_goal_reward_log_weights(library, x0, goal, p)
    return normalize_log_weights(lw)


def nw_estimate(weights: WeightVector, library: TrajectoryLibrary):
    """Kernel-weighted average of stored controls and states."""
    w = weights.normalized
    if len(w) != len(library):
        raise DimensionError("weight vector length does not match library size")
    Y_hat = np.einsum("n,nhu->hu", w, library.controls_arr)
    X_hat = np.einsum("n,ntx->tx", w, library.states_arr)
    return Y_hat, X_hat


def multinomial_draw(weights: WeightVector, K: int, rng: RngStream) -> np.ndarray:
    """K i.i.d. record indices with P(j) = w_j; deterministic per stream."""
    if K < 1:
        raise ParameterError("K must be >= 1")
    return rng.generator().choice(len(weights), size=K, p=weights.normalized)


@dataclass(frozen=True)
class BsdConfig:
    n_diffuse: int = 100
    k_candidates: int = 20000
    temperature: float = 0.05
    kernel: KernelParams = field(default_factory=KernelParams)
    schedule: NoiseSchedule = field(default_factory=lambda: make_schedule(100))
    selection: str = "softmax"     # or "argmax": pick the best-reward candidate

    def __post_init__(self):
        if self.k_candidates < 1 or self.temperature <= 0:
            raise ParameterError("need k_candidates >= 1 and temperature > 0")
        if self.selection not in ("softmax", "argmax"):
            raise ParameterError("selection must be 'softmax' or 'argmax'")
        if self.schedule.n_steps != self.n_diffuse:
            object.__setattr__(self, "schedule",
                               make_schedule(max(self.n_diffuse, 2),
                                             self.schedule.sigmas[0],
                                             self.schedule.sigmas[-1]))


class RecordShieldCache:
    """Per-plan shielded view of every library record for one (scene, x0).

    The current initial state is substituted into row 0 of each stored
    trajectory before shielding, so reverts near the start fall back to the
    trial's own (safe) state. Because the safe-set test is per-row, each
    record needs shielding only once per plan regardless of how often it is
    drawn.
    """

    def __init__(self, library: TrajectoryLibrary, scene: ParkingScene, x0):
        self.library = library
        self.scene = scene
        self.x0 = np.asarray(x0, dtype=float)
        system = library.system
        if not safe_mask(self.x0[None, :], scene, system)[0]:
            raise UnsafeStateError("library planner requires a safe initial state")
        N, T, n_x = library.states_arr.shape
        safe = safe_mask(library.states_arr.reshape(N * T, n_x),
                         scene, system).reshape(N, T)
        safe[:, 0] = True   # row 0 is the substituted, already-checked x0
        self._fill = _forward_fill_indices(safe)
        self.interventions = (~safe[:, 1:]).sum(axis=1)
        g_rows = goal_progress(library.states_arr, scene.goal_pose)
        g_rows[:, 0] = goal_progress(self.x0[None], scene.goal_pose)[0]
        g_out = np.take_along_axis(g_rows, self._fill, axis=1)
        self.rewards = reward_from_progress(g_out)

    def shielded_states(self, j: int) -> np.ndarray:
        out = self.library.states_arr[j][self._fill[j]].copy()
        out[self._fill[j] == 0] = self.x0
        return out


def bsd_denoise_step(Y_i: np.ndarray, library: TrajectoryLibrary, x0, goal,
                     scene: ParkingScene, sigma_i: float, sigma_next: float | None,
                     cfg: BsdConfig, rng: RngStream,
                     cache: RecordShieldCache | None = None):
    """One kernel denoising update; returns (next estimate, diagnostics).

    ``sigma_next`` is the noise level injected after the update (None on the
    final step).
    """
    if cache is None:
        cache = RecordShieldCache(library, scene, x0)
    weights = kernel_log_weights(Y_i, library, x0, goal, sigma_i, cfg.kernel)
    idx = multinomial_draw(weights, cfg.k_candidates, rng.child("draw"))
    rewards = cache.rewards[idx]
    if cfg.selection == "argmax":
        Y_bar = library.controls_arr[idx[int(np.argmax(rewards))]].copy()
    else:
        sel = reward_softmax(rewards, cfg.temperature).normalized
        per_record = np.bincount(idx, weights=sel, minlength=len(library))
        Y_bar = np.einsum("n,nhu->hu", per_record, library.controls_arr)
    diagnostics = {
        "kernel_entropy": float(-np.sum(np.where(weights.normalized > 0,
                                                 weights.normalized
                                                 * np.log(np.where(weights.normalized > 0,
                                                                   weights.normalized, 1.0)),
                                                 0.0))),
        "best_candidate_reward": float(np.max(rewards)),
    }
    if sigma_next is not None:
        Y_bar = Y_bar + sigma_next * draw_gaussian(Y_i.shape, rng.child("noise"))
    return Y_bar, diagnostics


def bsd_plan(x0, scene: ParkingScene, system: SystemSpec,
             library: TrajectoryLibrary, cfg: BsdConfig, rng: RngStream) -> PlanResult:
    """Model-free reverse-diffusion plan over the trajectory library.

    The final trajectory is the post-hoc-shielded kernel state estimate at
    the last denoised controls; the reported reward is computed on it.
    """
    if library.system.system_id != system.system_id:
        raise ParameterError("library was collected for a different system")
    x0 = np.asarray(x0, dtype=float)
    goal = scene.goal_pose
    t_start = time.perf_counter()
    cache = RecordShieldCache(library, scene, x0)
    sigmas = cfg.schedule.sigmas
    H, n_u = system.horizon, system.n_u
    trace = []
    with dynamics.forbid_calls():
        Y = draw_gaussian((H, n_u), rng.child("init"))
        for i in range(len(sigmas)):
            sigma_next = sigmas[i + 1] if i < len(sigmas) - 1 else None
            Y, diag = bsd_denoise_step(Y, library, x0, goal, scene, sigmas[i],
                                       sigma_next, cfg, rng.child("step", i), cache)
            trace.append(diag["best_candidate_reward"])
        final_weights = kernel_log_weights(Y, library, x0, goal,
                                           sigmas[-1], cfg.kernel)
        _, X_hat = nw_estimate(final_weights, library)
        X_hat[0] = x0
        safe = safe_mask(X_hat, scene, system)
        safe[0] = True
        fill = _forward_fill_indices(safe)
        states = X_hat[fill]
        interventions = int(np.count_nonzero(~safe[1:]))
        final_reward = float(reward_from_progress(
            goal_progress(states, goal)[None])[0])
    return PlanResult(controls=system.clamp_controls(Y), states=states,
                      reward=final_reward, interventions=interventions,
                      wall_time_ms=1000.0 * (time.perf_counter() - t_start),
                      diagnostics={"reward_trace": trace})


def nn_plan(x0, scene: ParkingScene, system: SystemSpec,
            library: TrajectoryLibrary,
            params: KernelParams | None = None) -> PlanResult:
    """Nearest-record retrieval: the context/goal/reward score without the
    diffusion kernel, no sampling, no denoising. Consumes no randomness."""
    params = params or KernelParams()
    x0 = np.asarray(x0, dtype=float)
    t_start = time.perf_counter()
    with dynamics.forbid_calls():
        cache = RecordShieldCache(library, scene, x0)
        scores = context_goal_reward_log_weights(library, x0, scene.goal_pose, params)
        j = int(np.argmax(scores))
        states = cache.shielded_states(j)
        final_reward = float(reward_from_progress(
            goal_progress(states, scene.goal_pose)[None])[0])
    return PlanResult(controls=library.controls_arr[j].copy(), states=states,
                      reward=final_reward,
                      interventions=int(cache.interventions[j]),
                      wall_time_ms=1000.0 * (time.perf_counter() - t_start),
                      diagnostics={"selected_record": j})
