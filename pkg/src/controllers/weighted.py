"""
Weighted MPC - single QP with high gains on priority tasks.

Priority task rows keep their full weight, secondary rows are scaled by
``secondary_ratio``. This is the soft-hierarchy baseline the hierarchical
controller is compared against.
"""

import logging
from typing import Optional

import numpy as np

from chain_model import (
    ChainModel,
    EndEffectorState,
    JointState,
    KinematicMaps,
    kinematic_maps,
)
from qp_solver import QPSolver
from trajectory import ReferenceWindow

from controllers.base import (
    ControlOutput,
    ControlStatus,
    Controller,
    ControllerWeights,
    HorizonConfig,
    JointLimits,
    lift_priority,
    scale_weight,
    shift_sequence,
)
from controllers.mpc_qp import build_mpc_qp

logger = logging.getLogger(__name__)


def weighted_q(weights: ControllerWeights, secondary_ratio: float) -> np.ndarray:
    """Q scaled by 1 on priority rows and ``secondary_ratio`` elsewhere."""
    lifted = lift_priority(weights.P)
    return scale_weight(weights.Q, lifted + (1.0 - lifted) * secondary_ratio)


def solve_to_output(
    problem, solver: QPSolver, steps: int, m: int, warm_start=None
) -> ControlOutput:
    """Solve a condensed QP and package its first input."""
    sol = solver.solve(problem, warm_start)
    u_seq = sol.x.reshape(steps, m)
    return ControlOutput(
        u=u_seq[0].copy(),
        predicted_cost=sol.objective,
        qp_status=sol.status.value,
        solve_time=sol.solve_time,
        status=ControlStatus.OPTIMAL if sol.ok else ControlStatus.FAILED,
        u_seq=u_seq,
    )


def weighted_mpc_step(
    maps: KinematicMaps,
    x0: EndEffectorState,
    q0: np.ndarray,
    qd0: np.ndarray,
    ref: ReferenceWindow,
    weights: ControllerWeights,
    horizon: HorizonConfig,
    limits: JointLimits,
    secondary_ratio: float = 1e-2,
    steps: Optional[int] = None,
    nominal_u: Optional[np.ndarray] = None,
    warm_start: Optional[np.ndarray] = None,
    solver: Optional[QPSolver] = None,
) -> ControlOutput:
    """
    Solve the weighted MPC once and return its first input.

    A failed solve is reported through ``status``; the caller decides
    whether to re-apply an earlier input.
    """
    steps = horizon.N if steps is None else steps
    problem = build_mpc_qp(
        maps,
        x0,
        q0,
        qd0,
        ref,
        weights,
        horizon,
        limits,
        steps=steps,
        Q=weighted_q(weights, secondary_ratio),
        nominal_u=nominal_u,
    )
    m = maps.B_kin.shape[1]
    ws = None if warm_start is None else np.asarray(warm_start).reshape(-1)
    return solve_to_output(problem, solver or QPSolver(), steps, m, ws)


class WeightedMPCController(Controller):
    """Receding-horizon weighted MPC with warm starts."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._solver = QPSolver(self.solver_config)
        self._last_seq: Optional[np.ndarray] = None

    @property
    def name(self) -> str:
        return "mpc"

    @property
    def version(self) -> str:
        return "1.0.0"

    @property
    def aliases(self):
        return ("weighted_mpc",)

    @property
    def steps(self) -> int:
        return self.horizon.N

    @property
    def window_length(self) -> int:
        return self.steps + 1

    def reset(self) -> None:
        super().reset()
        self._last_seq = None

    def compute(
        self, chain: ChainModel, x0, state: JointState, ref, limits
    ) -> ControlOutput:
        weights = self.weights_for(chain)
        maps = kinematic_maps(chain, state, self.horizon.dt, x0.o)
        guess = shift_sequence(self._last_seq, self.steps)
        out = weighted_mpc_step(
            maps,
            x0,
            state.q,
            state.qd,
            ref,
            weights,
            self.horizon,
            limits,
            secondary_ratio=self.defaults.secondary_ratio,
            steps=self.steps,
            nominal_u=guess,
            warm_start=guess,
            solver=self._solver,
        )
        self._last_seq = out.u_seq if out.succeeded else None
        return out
