"""Discrete-time dynamics for the four benchmark vehicles.

Systems (explicit Euler, dt = 0.1 s, horizon 50 by default):

* ``bicycle``  (3D: x, y, theta)                controls (v, delta)
* ``tt2d``     (4D: x, y, theta1, theta2)       controls (v, delta)
* ``ntrailer`` (5D: x, y, theta1, theta2, theta3) controls (v, delta)
* ``acctt2d``  (6D: x, y, theta1, theta2, v, a) controls (jerk, delta)

All step/rollout functions are pure; batched variants vectorize over a
leading candidate axis. A module-level call counter (and a poisoning
context manager) lets callers prove that a code path never touched the
dynamics model.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, KernplanError, NumericError, ParameterError

SYSTEM_IDS = ("bicycle", "tt2d", "ntrailer", "acctt2d")

_TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), _TWO_PI)


@dataclass(frozen=True)
class BodyShape:
    """One rectangular body of the vehicle footprint.

    ``offset`` shifts the rectangle center forward (along the body heading)
    from the body's reference point.
    """

    length: float
    width: float
    offset: float = 0.0


@dataclass(frozen=True)
class VehicleGeometry:
    """Footprint rectangles for the tractor and each trailer."""

    bodies: tuple

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)


@dataclass(frozen=True)
class SystemSpec:
    system_id: str
    n_x: int
    n_u: int
    dt: float
    horizon: int
    control_low: np.ndarray
    control_high: np.ndarray
    geometry: VehicleGeometry
    wheelbase: float = 2.5
    d1: float = 3.0
    d2: float = 3.0
    hitch_limit: float = 1.2
    accel_limit: float = 4.0
    vel_limit: float = 7.0
    # indices of angular state channels (wrapped after each step)
    angle_channels: tuple = ()

    def clamp_controls(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.control_low, self.control_high)

    def to_dict(self) -> dict:
        return {
            "system_id": self.system_id,
            "n_x": self.n_x,
            "n_u": self.n_u,
            "dt": self.dt,
            "horizon": self.horizon,
            "control_low": list(map(float, self.control_low)),
            "control_high": list(map(float, self.control_high)),
            "wheelbase": self.wheelbase,
            "d1": self.d1,
            "d2": self.d2,
            "hitch_limit": self.hitch_limit,
            "accel_limit": self.accel_limit,
            "vel_limit": self.vel_limit,
            "bodies": [[b.length, b.width, b.offset] for b in self.geometry.bodies],
        }

    @staticmethod
    def from_dict(d: dict) -> "SystemSpec":
        base = make_system(d["system_id"], dt=d["dt"], horizon=d["horizon"])
        geom = VehicleGeometry(bodies=tuple(BodyShape(*b) for b in d["bodies"]))
        return SystemSpec(
            system_id=d["system_id"],
            n_x=d["n_x"],
            n_u=d["n_u"],
            dt=d["dt"],
            horizon=d["horizon"],
            control_low=np.asarray(d["control_low"], dtype=float),
            control_high=np.asarray(d["control_high"], dtype=float),
            geometry=geom,
            wheelbase=d["wheelbase"],
            d1=d["d1"],
            d2=d["d2"],
            hitch_limit=d["hitch_limit"],
            accel_limit=d["accel_limit"],
            vel_limit=d["vel_limit"],
            angle_channels=base.angle_channels,
        )


_TRACTOR = BodyShape(length=3.0, width=1.6, offset=0.5)
_TRAILER = BodyShape(length=2.5, width=1.6, offset=0.0)


def default_geometry(system_id: str) -> VehicleGeometry:
    n_bodies = {"bicycle": 1, "tt2d": 2, "acctt2d": 2, "ntrailer": 3}[system_id]
    return VehicleGeometry(bodies=(_TRACTOR,) + (_TRAILER,) * (n_bodies - 1))


def make_system(system_id: str, dt: float = 0.1, horizon: int = 50) -> SystemSpec:
    """Construct the benchmark SystemSpec for one of the four vehicles."""
    if system_id not in SYSTEM_IDS:
        raise ParameterError(f"unknown system {system_id!r}")
    if dt <= 0 or horizon < 1:
        raise ParameterError("need dt > 0 and horizon >= 1")
    geom = default_geometry(system_id)
    # Speed bound sized so a horizon-length maneuver can cross the full lot.
    v_max, delta_max, jerk_max = 7.0, 0.6, 8.0
    if system_id == "bicycle":
        return SystemSpec("bicycle", 3, 2, dt, horizon,
                          np.array([-v_max, -delta_max]), np.array([v_max, delta_max]),
                          geom, angle_channels=(2,))
    if system_id == "tt2d":
        return SystemSpec("tt2d", 4, 2, dt, horizon,
                          np.array([-v_max, -delta_max]), np.array([v_max, delta_max]),
                          geom, angle_channels=(2, 3))
    if system_id == "ntrailer":
        return SystemSpec("ntrailer", 5, 2, dt, horizon,
                          np.array([-v_max, -delta_max]), np.array([v_max, delta_max]),
                          geom, angle_channels=(2, 3, 4))
    # acctt2d: controls are (jerk, delta); velocity and acceleration are states
    return SystemSpec("acctt2d", 6, 2, dt, horizon,
                      np.array([-jerk_max, -delta_max]), np.array([jerk_max, delta_max]),
                      geom, angle_channels=(2, 3))


class _CallCounter:
    """Counts dynamics evaluations; can be poisoned to prove model-freeness."""

    def __init__(self):
        self.count = 0
        self.forbidden = 0

    def tick(self, n: int):
        if self.forbidden:
            raise KernplanError("dynamics model invoked on a model-free code path")
        self.count += n


call_counter = _CallCounter()


@contextlib.contextmanager
def forbid_calls():
    """Poison the dynamics oracle: any step/rollout inside the block raises."""
    call_counter.forbidden += 1
    try:
        yield
    finally:
        call_counter.forbidden -= 1


def step_batch(system: SystemSpec, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Euler step of a batch of states (M, n_x) under controls (M, n_u)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim != 2 or x.shape[1] != system.n_x or u.shape != (x.shape[0], system.n_u):
        raise DimensionError(
            f"expected states (M,{system.n_x}) and controls (M,{system.n_u}), "
            f"got {x.shape} and {u.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise NumericError("states and controls must be finite")
    call_counter.tick(x.shape[0])
    u = system.clamp_controls(u)
    dt = system.dt
    out = x.copy()
    sid = system.system_id

    if sid == "acctt2d":
        jerk, delta = u[:, 0], u[:, 1]
        v, a = x[:, 4], x[:, 5]
    else:
        v, delta = u[:, 0], u[:, 1]

    th1 = x[:, 2]
    out[:, 0] = x[:, 0] + dt * v * np.cos(th1)
    out[:, 1] = x[:, 1] + dt * v * np.sin(th1)
    out[:, 2] = th1 + dt * (v / system.wheelbase) * np.tan(delta)

    if sid in ("tt2d", "ntrailer", "acctt2d"):
        th2 = x[:, 3]
        out[:, 3] = th2 + dt * (v / system.d1) * np.sin(th1 - th2)
    if sid == "ntrailer":
        th2, th3 = x[:, 3], x[:, 4]
        out[:, 4] = th3 + dt * (v * np.cos(th1 - th2) / system.d2) * np.sin(th2 - th3)
    if sid == "acctt2d":
        out[:, 4] = v + dt * a
        out[:, 5] = a + dt * jerk

    for ch in system.angle_channels:
        out[:, ch] = wrap_angle(out[:, ch])
    return out


def step(system: SystemSpec, x, u) -> np.ndarray:
    """Single-state Euler step; angles wrapped to (-pi, pi]."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return step_batch(system, x[None, :], u[None, :])[0]


def rollout(system: SystemSpec, x0, controls) -> np.ndarray:
    """Roll a control sequence (H, n_u) through the dynamics.

    Returns the (H+1, n_x) state trajectory with row 0 equal to ``x0``.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 2 or controls.shape[1] != system.n_u:
        raise DimensionError(f"controls must be (H,{system.n_u}), got {controls.shape}")
    H = controls.shape[0]
    x0 = np.asarray(x0, dtype=float)
    traj = np.empty((H + 1, system.n_x))
    traj[0] = x0
    cur = x0[None, :]
    for t in range(H):
        cur = step_batch(system, cur, controls[t][None, :])
        traj[t + 1] = cur[0]
    return traj


def rollout_batch(system: SystemSpec, x0, controls: np.ndarray) -> np.ndarray:
    """Roll a batch of control sequences (K, H, n_u) from a shared ``x0``."""
    K, H, _ = controls.shape
    traj = np.empty((K, H + 1, system.n_x))
    traj[:, 0] = np.asarray(x0, dtype=float)
    cur = np.broadcast_to(np.asarray(x0, dtype=float), (K, system.n_x)).copy()
    for t in range(H):
        cur = step_batch(system, cur, controls[:, t])
        traj[:, t + 1] = cur
    return traj
