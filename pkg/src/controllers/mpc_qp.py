"""
MPC QP construction - condensed quadratic programs over the horizon.

The predicted end-effector state follows

    x_{k+1} = x_k + B_e(o_k) B_kin_k u_k

with u_k = [qd_k; qdd_k]. States are eliminated so the QP variables are
the stacked inputs only. The 12-dim tracking error of a 13-dim state is

    e = S(o_ref) x - [p_ref; 0; pd_ref; w_ref],
    S(o_ref) = blockdiag(I, 2 G(o_ref)^T, I, I)

which maps the quaternion difference o - o_ref onto the world-frame
rotation error (G(o_ref)^T o_ref = 0).
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag

from chain_model import (
    EndEffectorState,
    KinematicMaps,
    build_b_e,
    quat_rate_matrix,
)
from qp_solver import QPProblem
from so3 import align_hemisphere
from trajectory import ReferenceWindow

from controllers.base import (
    ERROR_DIM,
    ControllerWeights,
    HorizonConfig,
    JointLimits,
    JointPrediction,
)

logger = logging.getLogger(__name__)


def error_map(o_ref: np.ndarray) -> np.ndarray:
    """12 x 13 map from state to tracking-error coordinates."""
    s = np.zeros((ERROR_DIM, 13))
    s[0:3, 0:3] = np.eye(3)
    s[3:6, 3:7] = 2.0 * quat_rate_matrix(o_ref).T
    s[6:9, 7:10] = np.eye(3)
    s[9:12, 10:13] = np.eye(3)
    return s


def propagate_nominal_quaternions(
    o0: np.ndarray,
    b_kin_seq: Sequence[np.ndarray],
    nominal_u: Optional[np.ndarray],
    dt: float,
) -> np.ndarray:
    """
    Quaternions along the horizon under a nominal input sequence.

    The hemisphere of ``o0`` is kept (no canonical sign flip) so the
    linear model stays continuous. ``None`` means zero input.
    """
    steps = len(b_kin_seq)
    out = np.zeros((steps + 1, 4))
    out[0] = o0
    for k in range(steps):
        o = out[k]
        if nominal_u is None:
            out[k + 1] = o
            continue
        w = (b_kin_seq[k] @ nominal_u[k])[3:6]
        nxt = o + 0.5 * quat_rate_matrix(o) @ w * dt
        out[k + 1] = nxt / np.linalg.norm(nxt)
    return out


def condense(
    x0: np.ndarray,
    b_kin_seq: Sequence[np.ndarray],
    ref: ReferenceWindow,
    Q: np.ndarray,
    R: np.ndarray,
    dt: float,
    nominal_u: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Eliminate the states of the tracking problem.

    Args:
        x0: Current 13-dim state.
        b_kin_seq: One 12 x m kinematic map per horizon step.
        ref: Reference window; sample k + 1 is the target of step k.
        Q: 12 x 12 error weight.
        R: m x m input weight.
        dt: Step size.
        nominal_u: Input sequence used to propagate the quaternion blocks.

    Returns:
        (H, g, constant) with cost 0.5 u^T H u + g^T u + constant.
    """
    steps = len(b_kin_seq)
    m = b_kin_seq[0].shape[1]
    o_nom = propagate_nominal_quaternions(x0[3:7], b_kin_seq, nominal_u, dt)
    increments = [build_b_e(o_nom[k], dt) @ b_kin_seq[k] for k in range(steps)]

    phi = np.zeros((ERROR_DIM * steps, m * steps))
    c = np.zeros(ERROR_DIM * steps)
    for k in range(steps):
        o_ref = align_hemisphere(ref.o[k + 1], o_nom[k + 1])
        s = error_map(o_ref)
        target = np.concatenate(
            [ref.p[k + 1], np.zeros(3), ref.pd[k + 1], ref.w[k + 1]]
        )
        rows = slice(ERROR_DIM * k, ERROR_DIM * (k + 1))
        c[rows] = s @ x0 - target
        for j in range(k + 1):
            phi[rows, m * j : m * (j + 1)] = s @ increments[j]

    q_bar = block_diag(*([Q] * steps))
    r_bar = block_diag(*([R] * steps))
    q_phi = q_bar @ phi
    H = 2.0 * (phi.T @ q_phi + r_bar)
    H = 0.5 * (H + H.T)
    g = 2.0 * q_phi.T @ c
    constant = float(c @ q_bar @ c)
    return H, g, constant


def input_bounds(limits: JointLimits, steps: int) -> Tuple[np.ndarray, np.ndarray]:
    """Velocity and acceleration boxes on the stacked inputs."""
    upper = np.tile(np.concatenate([limits.qd_max, limits.qdd_max]), steps)
    return -upper, upper


def joint_limit_rows(
    q0: np.ndarray, limits: JointLimits, steps: int, dt: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Linear rows keeping every predicted joint state inside its box.

    Positions accumulate q0 + sum_j (qd_j dt + 0.5 qdd_j dt^2); the velocity
    reached at the end of each step, qd_k + qdd_k dt, stays within +-qd_max.
    """
    n = limits.n_joints
    m = 2 * n
    step_block = np.hstack([np.eye(n) * dt, np.eye(n) * 0.5 * dt * dt])
    vel_block = np.hstack([np.eye(n), np.eye(n) * dt])

    pos = np.zeros((n * steps, m * steps))
    vel = np.zeros((n * steps, m * steps))
    for k in range(steps):
        for j in range(k + 1):
            pos[n * k : n * (k + 1), m * j : m * (j + 1)] = step_block
        vel[n * k : n * (k + 1), m * k : m * (k + 1)] = vel_block

    A = np.vstack([pos, vel])
    lbA = np.concatenate(
        [np.tile(limits.q_lower - q0, steps), np.tile(-limits.qd_max, steps)]
    )
    ubA = np.concatenate(
        [np.tile(limits.q_upper - q0, steps), np.tile(limits.qd_max, steps)]
    )
    return A, lbA, ubA


def _check_inputs(
    ref: ReferenceWindow, limits: JointLimits, n_joints: int, steps: int
) -> None:
    if len(ref) < steps + 1:
        raise ValueError(
            f"reference window has {len(ref)} samples, {steps + 1} required"
        )
    if limits.n_joints != n_joints:
        raise ValueError(
            f"limits cover {limits.n_joints} joints, model has {n_joints}"
        )


def build_mpc_qp(
    maps: KinematicMaps,
    x0: EndEffectorState,
    q0: np.ndarray,
    qd0: np.ndarray,
    ref: ReferenceWindow,
    weights: ControllerWeights,
    horizon: HorizonConfig,
    limits: JointLimits,
    steps: Optional[int] = None,
    Q: Optional[np.ndarray] = None,
    nominal_u: Optional[np.ndarray] = None,
) -> QPProblem:
    """
    Condensed MPC QP with the kinematic map frozen at (q0, qd0).

    Args:
        maps: Kinematic maps at the current joint state.
        x0: Current end-effector state.
        q0: Current joint positions (limit rows start here).
        qd0: Current joint velocities; ``maps`` must be evaluated at them.
        ref: Reference window of at least ``steps + 1`` samples.
        weights: Cost weights; ``Q`` overrides ``weights.Q`` when given.
        horizon: Horizon configuration (dt and default N).
        limits: Joint limits.
        steps: Horizon length; defaults to ``horizon.N``.
        nominal_u: Inputs used to propagate the quaternion blocks.

    Raises:
        ValueError: If the reference window is too short or limit vectors
            do not match the model.
    """
    steps = horizon.N if steps is None else steps
    n = maps.J.shape[1]
    _check_inputs(ref, limits, n, steps)
    b_kin_seq = [maps.B_kin] * steps
    H, g, constant = condense(
        x0.as_vector(),
        b_kin_seq,
        ref,
        weights.Q if Q is None else Q,
        weights.R,
        horizon.dt,
        nominal_u,
    )
    lb, ub = input_bounds(limits, steps)
    q0 = np.asarray(q0, dtype=float)
    A, lbA, ubA = joint_limit_rows(q0, limits, steps, horizon.dt)
    return QPProblem(H=H, g=g, lb=lb, ub=ub, A=A, lbA=lbA, ubA=ubA, constant=constant)


def build_relinearized_qp(
    b_kin_seq: List[np.ndarray],
    x0: EndEffectorState,
    q0: np.ndarray,
    ref: ReferenceWindow,
    weights: ControllerWeights,
    horizon: HorizonConfig,
    limits: JointLimits,
    pred: JointPrediction,
    coupled_rows: np.ndarray,
    coupling_penalty: Optional[float] = None,
) -> QPProblem:
    """
    Low-level QP with one kinematic map per step along the prediction.

    High-priority rows of B_kin,i u_i are tied to the high-level inputs,
    as equalities or, when ``coupling_penalty`` is given, as a quadratic
    penalty with that weight.
    """
    steps = len(b_kin_seq)
    m = b_kin_seq[0].shape[1]
    _check_inputs(ref, limits, m // 2, steps)
    u1 = pred.u_seq[:steps]
    H, g, constant = condense(
        x0.as_vector(), b_kin_seq, ref, weights.Q, weights.R, horizon.dt, u1
    )
    lb, ub = input_bounds(limits, steps)
    q0 = np.asarray(q0, dtype=float)
    A, lbA, ubA = joint_limit_rows(q0, limits, steps, horizon.dt)

    if coupled_rows.size:
        k = coupled_rows.size
        coupling = np.zeros((k * steps, m * steps))
        rhs = np.zeros(k * steps)
        for i, b in enumerate(b_kin_seq):
            sel = b[coupled_rows]
            coupling[k * i : k * (i + 1), m * i : m * (i + 1)] = sel
            rhs[k * i : k * (i + 1)] = sel @ u1[i]
        if coupling_penalty is None:
            A = np.vstack([A, coupling])
            lbA = np.concatenate([lbA, rhs])
            ubA = np.concatenate([ubA, rhs])
        else:
            H = H + 2.0 * coupling_penalty * coupling.T @ coupling
            g = g - 2.0 * coupling_penalty * coupling.T @ rhs
            constant += float(coupling_penalty * rhs @ rhs)
            H = 0.5 * (H + H.T)

    return QPProblem(H=H, g=g, lb=lb, ub=ub, A=A, lbA=lbA, ubA=ubA, constant=constant)
