"""Parking scenario: 32 m x 32 m lot, 16 spaces (8 columns x 2 rows),
vehicle footprints, the safe-set predicate, reward, and initial-state sampling.

Layout (all decided values, emitted as such in run metadata):

* spaces are 3 m wide x 6 m deep, two facing rows around a 12 m central
  aisle (bottom row y in [4, 10], top row y in [22, 28]), columns starting
  at x = 4;
* lot walls are four 0.5 m-thick rectangles hugging the boundary;
* the collision margin is 0.1 m; collision tests are separating-axis tests
  between the (margin-inflated) oriented body rectangles and axis-aligned
  obstacles.

The reward is bounded in (0, 6]: a running/terminal blend of
``g(x) = exp(-|p - p_goal| / 4) * exp(-|wrap(theta - theta_goal)|)`` with
weights 0.3 / 0.7. Its maximum, 6.0, is attained only by sitting on the
goal pose for the whole horizon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dynamics import SystemSpec, VehicleGeometry, wrap_angle
from .errors import ConfigError, NumericError
from .numcore import RngStream

LOT_SIZE = 32.0
SPACE_W = 3.0
SPACE_D = 6.0
N_COLS = 8
N_ROWS = 2
N_SPACES = N_COLS * N_ROWS
WALL_THICKNESS = 0.5
DEFAULT_MARGIN = 0.1

# reward shape
_POS_SCALE = 4.0   # m
_ANG_SCALE = 1.0   # rad
_RUN_WEIGHT = 0.3
_TERM_WEIGHT = 0.7
REWARD_MAX = 6.0

_COL_X0 = 4.0                      # left edge of the first column
_BOTTOM_Y = (4.0, 4.0 + SPACE_D)   # bottom row extent
_TOP_Y = (28.0 - SPACE_D, 28.0)    # top row extent


def space_rects() -> np.ndarray:
    """All 16 space AABBs as rows (xmin, ymin, xmax, ymax); index = row*8+col."""
    rects = np.empty((N_SPACES, 4))
    for i in range(N_SPACES):
        row, col = divmod(i, N_COLS)
        x0 = _COL_X0 + SPACE_W * col
        y0, y1 = _BOTTOM_Y if row == 0 else _TOP_Y
        rects[i] = (x0, y0, x0 + SPACE_W, y1)
    return rects


def _wall_rects() -> np.ndarray:
    t, L = WALL_THICKNESS, LOT_SIZE
    return np.array([
        (0.0, 0.0, L, t),          # bottom
        (0.0, L - t, L, L),        # top
        (0.0, 0.0, t, L),          # left
        (L - t, 0.0, L, L),        # right
    ])


def space_heading(index: int) -> float:
    """Goal heading for a space: nose pointing into the space from the aisle."""
    row = index // N_COLS
    return -np.pi / 2 if row == 0 else np.pi / 2


@dataclass(frozen=True)
class ParkingScene:
    goal_space_index: int
    occupied: tuple                 # sorted space indices holding obstacles
    goal_pose: np.ndarray           # one state row of the active system
    obstacles: np.ndarray           # (O, 4) AABBs: occupied spaces + walls
    system_id: str

    def to_json(self) -> str:
        return json.dumps({
            "goal_space_index": self.goal_space_index,
            "occupied": list(self.occupied),
            "system_id": self.system_id,
        })

    @staticmethod
    def from_json(text: str, system: SystemSpec) -> "ParkingScene":
        d = json.loads(text)
        return build_scene(d["goal_space_index"], d["occupied"], system)


def build_scene(goal_space_index: int, occupied, system: SystemSpec) -> ParkingScene:
    """Deterministic scene with the goal pose centered in the goal space.

    ``occupied`` is an iterable of space indices or an int bitmask; ``None``
    occupies every space except the goal.
    """
    if not 0 <= goal_space_index < N_SPACES:
        raise ConfigError(f"goal_space_index must be in 0..{N_SPACES - 1}")
    if occupied is None:
        occ = sorted(set(range(N_SPACES)) - {goal_space_index})
    elif isinstance(occupied, int):
        occ = [i for i in range(N_SPACES) if occupied >> i & 1]
    else:
        occ = sorted(set(int(i) for i in occupied))
    if goal_space_index in occ:
        raise ConfigError("goal space is occupied")

    rects = space_rects()
    obstacles = np.vstack([rects[occ], _wall_rects()]) if occ else _wall_rects()

    r = rects[goal_space_index]
    cx, cy = (r[0] + r[2]) / 2, (r[1] + r[3]) / 2
    heading = space_heading(goal_space_index)
    pose = np.zeros(system.n_x)
    pose[0], pose[1] = cx, cy
    for ch in system.angle_channels:
        pose[ch] = heading
    return ParkingScene(goal_space_index=goal_space_index, occupied=tuple(occ),
                        goal_pose=pose, obstacles=obstacles,
                        system_id=system.system_id)


# ---------------------------------------------------------------------------
# footprints and collision predicate
# ---------------------------------------------------------------------------

def _body_frames(states: np.ndarray, system: SystemSpec, geom: VehicleGeometry):
    """Centers (M,B,2), headings (M,B) and half-dims (B,) of all bodies."""
    M = states.shape[0]
    B = geom.n_bodies
    centers = np.empty((M, B, 2))
    headings = np.empty((M, B))
    ref = states[:, :2].copy()
    hitch = (system.d1, system.d2)
    for b, body in enumerate(geom.bodies):
        th = states[:, 2 + b]
        c, s = np.cos(th), np.sin(th)
        if b > 0:
            ref = ref - hitch[b - 1] * np.stack([c, s], axis=1)
        centers[:, b, 0] = ref[:, 0] + body.offset * c
        centers[:, b, 1] = ref[:, 1] + body.offset * s
        headings[:, b] = th
    half_l = np.array([b.length / 2 for b in geom.bodies])
    half_w = np.array([b.width / 2 for b in geom.bodies])
    return centers, headings, half_l, half_w


def footprints(state, system: SystemSpec, geom: VehicleGeometry | None = None):
    """Oriented footprint rectangles of one state, as (B, 4, 2) corner arrays.

    Corners are ordered counter-clockwise starting front-left.
    """
    geom = geom or system.geometry
    s = np.asarray(state, dtype=float)[None, :]
    centers, headings, hl, hw = _body_frames(s, system, geom)
    c, si = np.cos(headings[0]), np.sin(headings[0])
    d = np.stack([c, si], axis=1)          # (B, 2) forward
    p = np.stack([-si, c], axis=1)         # (B, 2) left
    signs = np.array([(1, 1), (-1, 1), (-1, -1), (1, -1)], dtype=float)
    corners = (centers[0][:, None, :]
               + signs[None, :, 0, None] * hl[:, None, None] * d[:, None, :]
               + signs[None, :, 1, None] * hw[:, None, None] * p[:, None, :])
    return corners


def _collides_any(centers, headings, half_l, half_w, aabbs, margin) -> np.ndarray:
    """Separating-axis OBB/AABB test; True (M,) where any body hits any box.

    Inflates the body half-extents by ``margin`` so "collision" means the
    separation distance is below the margin.
    """
    M, B = headings.shape
    if aabbs.shape[0] == 0:
        return np.zeros(M, dtype=bool)
    hl = half_l + margin
    hw = half_w + margin
    cos_t, sin_t = np.cos(headings), np.sin(headings)         # (M, B)
    # body corner extents on world axes
    ext_x = np.abs(cos_t) * hl + np.abs(sin_t) * hw            # (M, B)
    ext_y = np.abs(sin_t) * hl + np.abs(cos_t) * hw
    cx, cy = centers[..., 0], centers[..., 1]
    ox0, oy0, ox1, oy1 = (aabbs[:, i] for i in range(4))       # (O,)
    hit = np.ones((M, B, aabbs.shape[0]), dtype=bool)
    hit &= (cx + ext_x)[..., None] > ox0
    hit &= (cx - ext_x)[..., None] < ox1
    hit &= (cy + ext_y)[..., None] > oy0
    hit &= (cy - ext_y)[..., None] < oy1
    # obstacle extents on the body axes (AABB corners projected analytically)
    ocx, ocy = (ox0 + ox1) / 2, (oy0 + oy1) / 2                # (O,)
    ohx, ohy = (ox1 - ox0) / 2, (oy1 - oy0) / 2
    for axis, ext in (("fwd", hl), ("lat", hw)):
        if axis == "fwd":
            ax, ay = cos_t, sin_t
        else:
            ax, ay = -sin_t, cos_t
        center_gap = ((ocx[None, None, :] - cx[..., None]) * ax[..., None]
                      + (ocy[None, None, :] - cy[..., None]) * ay[..., None])
        reach = (np.abs(ax)[..., None] * ohx[None, None, :]
                 + np.abs(ay)[..., None] * ohy[None, None, :])
        hit &= np.abs(center_gap) < reach + ext[None, :, None]
    return hit.any(axis=(1, 2))


def safe_mask(states: np.ndarray, scene: ParkingScene, system: SystemSpec,
              margin: float = DEFAULT_MARGIN,
              extra_obstacles: np.ndarray | None = None) -> np.ndarray:
    """Vectorized safe-set membership for a batch of state rows (M, n_x)."""
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[None, :]
    if not np.all(np.isfinite(states)):
        raise NumericError("states must be finite")
    geom = system.geometry
    centers, headings, hl, hw = _body_frames(states, system, geom)

    ok = np.ones(states.shape[0], dtype=bool)
    # lot containment of margin-inflated bodies
    ext_hl, ext_hw = hl + margin, hw + margin
    cos_t, sin_t = np.cos(headings), np.sin(headings)
    ext_x = np.abs(cos_t) * ext_hl + np.abs(sin_t) * ext_hw
    ext_y = np.abs(sin_t) * ext_hl + np.abs(cos_t) * ext_hw
    ok &= np.all(centers[..., 0] - ext_x >= 0.0, axis=1)
    ok &= np.all(centers[..., 0] + ext_x <= LOT_SIZE, axis=1)
    ok &= np.all(centers[..., 1] - ext_y >= 0.0, axis=1)
    ok &= np.all(centers[..., 1] + ext_y <= LOT_SIZE, axis=1)

    obstacles = scene.obstacles
    if extra_obstacles is not None and len(extra_obstacles):
        obstacles = np.vstack([obstacles, extra_obstacles])
    ok &= ~_collides_any(centers, headings, hl, hw, obstacles, margin)

    # kinodynamic limits
    if system.system_id in ("tt2d", "ntrailer", "acctt2d"):
        ok &= np.abs(wrap_angle(states[:, 2] - states[:, 3])) <= system.hitch_limit
    if system.system_id == "ntrailer":
        ok &= np.abs(wrap_angle(states[:, 3] - states[:, 4])) <= system.hitch_limit
    if system.system_id == "acctt2d":
        ok &= np.abs(states[:, 4]) <= system.vel_limit
        ok &= np.abs(states[:, 5]) <= system.accel_limit
    return ok


def is_safe(state, scene: ParkingScene, system: SystemSpec,
            margin: float = DEFAULT_MARGIN) -> bool:
    """True iff the state is in the safe set (collision-free, limits hold)."""
    return bool(safe_mask(np.asarray(state, dtype=float)[None, :],
                          scene, system, margin)[0])


# ---------------------------------------------------------------------------
# reward
# ---------------------------------------------------------------------------

def goal_progress(states: np.ndarray, goal_pose: np.ndarray) -> np.ndarray:
    """Per-state goal proximity g in (0, 1]; uses position + lead heading."""
    states = np.asarray(states, dtype=float)
    dp = np.linalg.norm(states[..., :2] - goal_pose[:2], axis=-1)
    dth = np.abs(wrap_angle(states[..., 2] - goal_pose[2]))
    return np.exp(-dp / _POS_SCALE) * np.exp(-dth / _ANG_SCALE)


def reward_from_progress(g: np.ndarray) -> np.ndarray:
    """Blend running and terminal progress; ``g`` has time on the last axis."""
    running = g[..., 1:].mean(axis=-1)
    return REWARD_MAX * (_RUN_WEIGHT * running + _TERM_WEIGHT * g[..., -1])


def reward(trajectory: np.ndarray, scene: ParkingScene) -> float:
    """Reward of one (H+1, n_x) state trajectory; in (0, 6]."""
    g = goal_progress(np.asarray(trajectory, dtype=float), scene.goal_pose)
    return float(reward_from_progress(g))


def reward_batch(trajectories: np.ndarray, scene: ParkingScene) -> np.ndarray:
    """Rewards of a (K, H+1, n_x) batch of state trajectories."""
    g = goal_progress(trajectories, scene.goal_pose)
    return reward_from_progress(g)


# ---------------------------------------------------------------------------
# initial states
# ---------------------------------------------------------------------------

def sample_initial_state(scene: ParkingScene, system: SystemSpec, rng: RngStream,
                         max_tries: int = 10000) -> np.ndarray:
    """Uniform rejection sample over the drivable region.

    Drivable means safe with 0.5 m of maneuvering clearance *and* clear of
    every parking space (occupied or not), so sampled starts remain safe
    under any occupancy pattern and are never wedged against a wall or the
    back of a parking row. Heading is uniform on (-pi, pi], trailers
    aligned, velocity/acceleration zero.
    """
    gen = rng.generator()
    all_spaces = space_rects()
    for _ in range(max_tries):
        xy = gen.uniform(2.0, LOT_SIZE - 2.0, size=2)
        th = wrap_angle(gen.uniform(-np.pi, np.pi))
        state = np.zeros(system.n_x)
        state[0], state[1] = xy
        for ch in system.angle_channels:
            state[ch] = th
        mask = safe_mask(state[None, :], scene, system, margin=0.5,
                         extra_obstacles=all_spaces)
        if mask[0]:
            return state
    raise ConfigError("no free space: rejection sampling exhausted")
