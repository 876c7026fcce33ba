"""
Hierarchical MPC - two QPs per control cycle.

The high level tracks only the priority task axes with the kinematic map
frozen at the current state and predicts a joint trajectory. The low
level re-linearizes B_kin at every predicted joint state, tracks all task
axes, and keeps the priority rows of its task-space motion equal to the
high level's.
"""

import logging
import time
from typing import Optional, Tuple

import numpy as np

from chain_model import (
    ChainModel,
    EndEffectorState,
    JointState,
    KinematicMaps,
    build_b_kin,
    kinematic_maps,
)
from qp_solver import QPSolver
from simulator import integrate_joints
from trajectory import ReferenceWindow

from controllers.base import (
    ControlOutput,
    ControlStatus,
    Controller,
    ControllerWeights,
    HorizonConfig,
    JointLimits,
    JointPrediction,
    check_priority,
    lift_priority,
    scale_weight,
    shift_sequence,
)
from controllers.mpc_qp import build_mpc_qp, build_relinearized_qp
from controllers.weighted import solve_to_output

logger = logging.getLogger(__name__)

START_TOL = 1e-12


def rollout(
    q0: np.ndarray, qd0: np.ndarray, u_seq: np.ndarray, dt: float
) -> JointPrediction:
    """Integrate an input sequence with the plant recursion."""
    steps = u_seq.shape[0]
    n = q0.shape[0]
    q_seq = np.zeros((steps + 1, n))
    qd_seq = np.zeros((steps + 1, n))
    q_seq[0], qd_seq[0] = q0, qd0
    for k in range(steps):
        q_seq[k + 1], qd_seq[k + 1] = integrate_joints(
            q_seq[k], qd_seq[k], u_seq[k], dt
        )
    return JointPrediction(q_seq=q_seq, qd_seq=qd_seq, u_seq=np.array(u_seq))


def high_level_step(
    maps: KinematicMaps,
    x0: EndEffectorState,
    q0: np.ndarray,
    qd0: np.ndarray,
    ref: ReferenceWindow,
    weights: ControllerWeights,
    horizon: HorizonConfig,
    limits: JointLimits,
    nominal_u: Optional[np.ndarray] = None,
    warm_start: Optional[np.ndarray] = None,
    solver: Optional[QPSolver] = None,
) -> Tuple[ControlOutput, JointPrediction]:
    """
    Priority-only MPC and the joint trajectory it predicts.

    Non-selected task rows (pose and matching velocity rows) get zero
    weight. If the QP fails the prediction is the zero-input rollout.

    Raises:
        ValueError: If the priority selector violates the popcount rule.
    """
    n = maps.J.shape[1]
    check_priority(weights.P, n)
    steps = horizon.N_h
    q1 = scale_weight(weights.Q, lift_priority(weights.P))
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
        Q=q1,
        nominal_u=nominal_u,
    )
    ws = None if warm_start is None else np.asarray(warm_start).reshape(-1)
    out = solve_to_output(problem, solver or QPSolver(), steps, 2 * n, ws)
    if not out.succeeded:
        logger.warning(f"High-level QP {out.qp_status}; predicting zero input")
        out.u_seq = np.zeros((steps, 2 * n))
    started = time.perf_counter()
    pred = rollout(
        np.asarray(q0, dtype=float), np.asarray(qd0, dtype=float), out.u_seq, horizon.dt
    )
    out.timings["rollout"] = time.perf_counter() - started
    return out, pred


def low_level_step(
    chain: ChainModel,
    x0: EndEffectorState,
    q0: np.ndarray,
    qd0: np.ndarray,
    ref: ReferenceWindow,
    weights: ControllerWeights,
    horizon: HorizonConfig,
    limits: JointLimits,
    pred: JointPrediction,
    coupling_penalty: float = 1e6,
    warm_start: Optional[np.ndarray] = None,
    solver: Optional[QPSolver] = None,
) -> ControlOutput:
    """
    Re-linearized full-task MPC coupled to the high-level prediction.

    B_kin is evaluated at every predicted (q, qd). If coupling and joint
    limits conflict, the coupling becomes a penalty and the QP is solved
    once more.

    Raises:
        ValueError: If the prediction is shorter than N_l or does not start
            at (q0, qd0).
    """
    steps = horizon.N_l
    if pred.steps < steps:
        raise ValueError(f"prediction covers {pred.steps} steps, N_l={steps}")
    if not (
        np.allclose(pred.q_seq[0], q0, rtol=0.0, atol=START_TOL)
        and np.allclose(pred.qd_seq[0], qd0, rtol=0.0, atol=START_TOL)
    ):
        raise ValueError("prediction does not start at the current joint state")
    m = 2 * chain.n_joints
    b_kin_seq = [
        build_b_kin(chain, JointState(pred.q_seq[i], pred.qd_seq[i]))
        for i in range(steps)
    ]
    coupled = np.flatnonzero(lift_priority(weights.P) > 0)
    solver = solver or QPSolver()
    ws = pred.u_seq[:steps].reshape(-1) if warm_start is None else warm_start

    problem = build_relinearized_qp(
        b_kin_seq, x0, q0, ref, weights, horizon, limits, pred, coupled
    )
    out = solve_to_output(problem, solver, steps, m, ws)
    if out.succeeded or coupled.size == 0:
        return out

    logger.warning(f"Low-level QP {out.qp_status}; relaxing coupling to a penalty")
    relaxed = build_relinearized_qp(
        b_kin_seq,
        x0,
        q0,
        ref,
        weights,
        horizon,
        limits,
        pred,
        coupled,
        coupling_penalty=coupling_penalty,
    )
    retry = solve_to_output(relaxed, solver, steps, m, ws)
    retry.solve_time += out.solve_time
    if retry.succeeded:
        retry.status = ControlStatus.RELAXED
        retry.qp_status = "relaxed"
    return retry


def hmpc_step(
    chain: ChainModel,
    x0: EndEffectorState,
    s: JointState,
    ref: ReferenceWindow,
    weights: ControllerWeights,
    horizon: HorizonConfig,
    limits: JointLimits,
    coupling_penalty: float = 1e6,
    nominal_u: Optional[np.ndarray] = None,
    warm_start: Optional[np.ndarray] = None,
    high_solver: Optional[QPSolver] = None,
    low_solver: Optional[QPSolver] = None,
) -> ControlOutput:
    """
    One hierarchical control cycle; returns the low-level first input.

    ``timings`` holds the high-level, rollout and low-level times and
    ``levels`` the QP status of each level.
    """
    check_priority(weights.P, chain.n_joints)
    maps = kinematic_maps(chain, s, horizon.dt, x0.o)
    high, pred = high_level_step(
        maps,
        x0,
        s.q,
        s.qd,
        ref,
        weights,
        horizon,
        limits,
        nominal_u=nominal_u,
        warm_start=warm_start,
        solver=high_solver,
    )
    low = low_level_step(
        chain,
        x0,
        s.q,
        s.qd,
        ref,
        weights,
        horizon,
        limits,
        pred,
        coupling_penalty=coupling_penalty,
        solver=low_solver,
    )
    low.timings = {
        "high": high.solve_time,
        "rollout": high.timings.get("rollout", 0.0),
        "low": low.solve_time,
    }
    low.solve_time = sum(low.timings.values())
    low.levels = {"high": high.qp_status, "low": low.qp_status}
    return low


class HMPCController(Controller):
    """Hierarchical MPC with per-level solver workspaces."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._high_solver = QPSolver(self.solver_config)
        self._low_solver = QPSolver(self.solver_config)
        self._last_seq: Optional[np.ndarray] = None

    @property
    def name(self) -> str:
        return "hmpc"

    @property
    def version(self) -> str:
        return "1.0.0"

    @property
    def window_length(self) -> int:
        return max(self.horizon.N_h, self.horizon.N_l) + 1

    def reset(self) -> None:
        super().reset()
        self._last_seq = None

    def compute(self, chain, x0, state, ref, limits) -> ControlOutput:
        weights = self.weights_for(chain)
        guess = shift_sequence(self._last_seq, self.horizon.N_h)
        out = hmpc_step(
            chain,
            x0,
            state,
            ref,
            weights,
            self.horizon,
            limits,
            coupling_penalty=self.defaults.coupling_penalty,
            nominal_u=guess,
            warm_start=guess,
            high_solver=self._high_solver,
            low_solver=self._low_solver,
        )
        self._last_seq = out.u_seq if out.succeeded else None
        return out
