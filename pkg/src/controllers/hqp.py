"""
HQP - the single-step (N = 1) special case of the weighted MPC.
"""

import logging
from typing import Optional

import numpy as np

from chain_model import EndEffectorState, KinematicMaps
from qp_solver import QPSolver
from trajectory import ReferenceWindow

from controllers.base import (
    ControlOutput,
    ControllerWeights,
    HorizonConfig,
    JointLimits,
)
from controllers.weighted import WeightedMPCController, weighted_mpc_step

logger = logging.getLogger(__name__)


def hqp_step(
    maps: KinematicMaps,
    x0: EndEffectorState,
    q0: np.ndarray,
    qd0: np.ndarray,
    ref: ReferenceWindow,
    weights: ControllerWeights,
    horizon: HorizonConfig,
    limits: JointLimits,
    secondary_ratio: float = 1e-2,
    warm_start: Optional[np.ndarray] = None,
    solver: Optional[QPSolver] = None,
) -> ControlOutput:
    """Weighted MPC with a one-step horizon."""
    return weighted_mpc_step(
        maps,
        x0,
        q0,
        qd0,
        ref,
        weights,
        horizon,
        limits,
        secondary_ratio=secondary_ratio,
        steps=1,
        warm_start=warm_start,
        solver=solver,
    )


class HQPController(WeightedMPCController):
    """Single-step hierarchical QP baseline."""

    @property
    def name(self) -> str:
        return "hqp"

    @property
    def aliases(self):
        return ()

    @property
    def steps(self) -> int:
        return 1
