"""Shared planner output record."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PlanResult:
    """Outcome of one planning call.

    ``interventions`` counts shield reverts on the reported trajectory;
    zero means the planner never proposed a violating state.
    """

    controls: np.ndarray          # (H, n_u)
    states: np.ndarray            # (H+1, n_x), shielded
    reward: float
    interventions: int
    wall_time_ms: float = 0.0
    diagnostics: dict = field(default_factory=dict)
