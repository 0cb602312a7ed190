import numpy as np
import pytest

from kernplan import dynamics as dyn
from kernplan import parking
from kernplan.bsd import TrajectoryLibrary, TrajectoryRecord
from kernplan.numcore import RngStream


@pytest.fixture(scope="session")
def bicycle():
    return dyn.make_system("bicycle")


@pytest.fixture(scope="session")
def acctt2d():
    return dyn.make_system("acctt2d")


@pytest.fixture(scope="session")
def scene(bicycle):
    return parking.build_scene(3, None, bicycle)


@pytest.fixture(scope="session")
def empty_scene(bicycle):
    return parking.build_scene(3, (), bicycle)


def make_library(system, scene, n_records, base_seed=0, horizon=None):
    """Small synthetic library: random safe starts, random clamped controls,
    true rollouts, true rewards."""
    from kernplan.dynamics import rollout

    records = []
    root = RngStream(base_seed)
    i = 0
    while len(records) < n_records:
        st = root.child("rec", i)
        i += 1
        try:
            x0 = parking.sample_initial_state(scene, system, st.child("x0"))
        except Exception:
            continue
        g = st.child("u").generator()
        u = system.clamp_controls(
            g.normal(0.0, 1.0, size=(system.horizon, system.n_u)))
        states = rollout(system, x0, u)
        from kernplan.shield import shield_states
        states = shield_states(states, scene, system)
        r = parking.reward(states, scene)
        records.append(TrajectoryRecord(controls=u, states=states, reward=r))
    return TrajectoryLibrary(records, system)
