"""Safety shield: revert constraint-violating states to the last safe state.

Two forms are provided. ``shield_states`` is the post-hoc form applied to a
full predicted trajectory regardless of where the states came from (dynamics,
kernel estimates, or noise). ``shielded_rollout`` interleaves the shield with
dynamics integration, so subsequent steps continue from the reverted state.
"""

from __future__ import annotations

import numpy as np

from . import dynamics
from .dynamics import SystemSpec
from .errors import UnsafeStateError
from .parking import DEFAULT_MARGIN, ParkingScene, safe_mask


def _forward_fill_indices(safe: np.ndarray) -> np.ndarray:
    """Per row t, the index of the latest safe row <= t (row 0 assumed safe)."""
    idx = np.where(safe, np.arange(safe.shape[-1]), 0)
    return np.maximum.accumulate(idx, axis=-1)


def shield_report(trajectory: np.ndarray, scene: ParkingScene, system: SystemSpec,
                  margin: float = DEFAULT_MARGIN):
    """Shield a trajectory; returns (shielded trajectory, intervention count)."""
    X = np.asarray(trajectory, dtype=float)
    safe = safe_mask(X, scene, system, margin)
    if not safe[0]:
        raise UnsafeStateError("shield precondition violated: row 0 is unsafe")
    fill = _forward_fill_indices(safe)
    return X[fill], int(np.count_nonzero(~safe))


def shield_states(trajectory: np.ndarray, scene: ParkingScene, system: SystemSpec,
                  margin: float = DEFAULT_MARGIN) -> np.ndarray:
    """Post-hoc shield: row t is kept if safe, else replaced by the previous
    shielded row. Idempotent; every output row is in the safe set."""
    return shield_report(trajectory, scene, system, margin)[0]


def shield_states_batch(trajectories: np.ndarray, scene: ParkingScene,
                        system: SystemSpec, margin: float = DEFAULT_MARGIN):
    """Shield (K, H+1, n_x) trajectories at once.

    Returns (shielded (K, H+1, n_x), interventions (K,)).
    """
    K, T, n_x = trajectories.shape
    flat = trajectories.reshape(K * T, n_x)
    safe = safe_mask(flat, scene, system, margin).reshape(K, T)
    if not np.all(safe[:, 0]):
        raise UnsafeStateError("shield precondition violated: some row 0 unsafe")
    fill = _forward_fill_indices(safe)
    out = np.take_along_axis(trajectories, fill[:, :, None], axis=1)
    return out, (~safe).sum(axis=1)


def shielded_rollout(system: SystemSpec, x0, controls, scene: ParkingScene,
                     margin: float = DEFAULT_MARGIN):
    """Dynamics rollout with the shield interleaved at every step.

    Returns (trajectory (H+1, n_x), intervention count). The candidate next
    state is discarded (state held) whenever it leaves the safe set, and
    integration continues from the held state.
    """
    traj, interventions = shielded_rollout_batch(
        system, x0, np.asarray(controls, dtype=float)[None, :, :], scene, margin)
    return traj[0], int(interventions[0])


def shielded_rollout_batch(system: SystemSpec, x0, controls: np.ndarray,
                           scene: ParkingScene, margin: float = DEFAULT_MARGIN):
    """Interleaved shielded rollout of (K, H, n_u) control batches from ``x0``.

    Returns (trajectories (K, H+1, n_x), interventions (K,)).
    """
    x0 = np.asarray(x0, dtype=float)
    if not safe_mask(x0[None, :], scene, system, margin)[0]:
        raise UnsafeStateError("shielded rollout requires a safe initial state")
    K, H, _ = controls.shape
    traj = np.empty((K, H + 1, system.n_x))
    cur = np.broadcast_to(x0, (K, system.n_x)).copy()
    traj[:, 0] = cur
    interventions = np.zeros(K, dtype=int)
    for t in range(H):
        cand = dynamics.step_batch(system, cur, controls[:, t])
        ok = safe_mask(cand, scene, system, margin)
        cur = np.where(ok[:, None], cand, cur)
        interventions += ~ok
        traj[:, t + 1] = cur
    return traj, interventions
