"""
Chain Model - serial-chain kinematics for modular manipulators.

Forward kinematics, the world-frame geometric Jacobian and its time
derivative, quaternion kinematics and the stacked mapping matrices used
by the MPC state model:

    B_kin = [[J, 0], [Jdot, J]]        maps [qd; qdd] to [v; w; a; alpha]
    B_e   = blockdiag(I dt, G(o) dt/2, I dt, I dt)   (13 x 12 increment map)

All functions are pure; chains and states are never mutated.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from so3 import KinematicsError, axis_angle, canonical_quat, quat_from_matrix, skew

logger = logging.getLogger(__name__)

STATE_DIM = 13
INCREMENT_DIM = 12


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation matrix plus translation (meters)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=float)
        )
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise KinematicsError("transform needs a 3x3 rotation and a 3-vector")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_translation(cls, translation: Sequence[float]) -> "RigidTransform":
        return cls(np.eye(3), np.asarray(translation, dtype=float))

    def as_matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self * other."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


@dataclass(frozen=True, eq=False)
class JointModule:
    """One revolute joint module."""

    axis: np.ndarray
    parent_transform: RigidTransform = field(default_factory=RigidTransform)
    q_limits: Tuple[float, float] = (-2.75, 2.75)
    qd_limit: float = 2.0
    qdd_limit: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        object.__setattr__(
            self, "q_limits", (float(self.q_limits[0]), float(self.q_limits[1]))
        )


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Ordered serial chain of joint modules (a morphology)."""

    modules: Tuple[JointModule, ...]
    base_transform: RigidTransform = field(default_factory=RigidTransform)
    tool_transform: RigidTransform = field(default_factory=RigidTransform)
    name: str = "chain"

    def __post_init__(self):
        object.__setattr__(self, "modules", tuple(self.modules))

    @property
    def n_joints(self) -> int:
        return len(self.modules)

    @property
    def q_lower(self) -> np.ndarray:
        return np.array([m.q_limits[0] for m in self.modules])

    @property
    def q_upper(self) -> np.ndarray:
        return np.array([m.q_limits[1] for m in self.modules])

    @property
    def qd_max(self) -> np.ndarray:
        return np.array([m.qd_limit for m in self.modules])

    @property
    def qdd_max(self) -> np.ndarray:
        return np.array([m.qdd_limit for m in self.modules])


@dataclass(frozen=True, eq=False)
class JointState:
    """Joint positions (rad) and velocities (rad/s)."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qd, dtype=float)
        if q.ndim != 1 or q.shape != qd.shape:
            raise KinematicsError(
                f"q and qd must be vectors of equal length, got {q.shape}, {qd.shape}"
            )
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)

    @classmethod
    def at_rest(cls, q: Sequence[float]) -> "JointState":
        q = np.asarray(q, dtype=float)
        return cls(q, np.zeros_like(q))


@dataclass(frozen=True, eq=False)
class EndEffectorState:
    """End-effector state [p, o, pd, w]; o is a canonical unit quaternion."""

    p: np.ndarray
    o: np.ndarray
    pd: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "o", canonical_quat(self.o))
        object.__setattr__(self, "pd", np.asarray(self.pd, dtype=float))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))

    def as_vector(self) -> np.ndarray:
        """Stacked 13-vector [p, o, pd, w]."""
        return np.concatenate([self.p, self.o, self.pd, self.w])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "EndEffectorState":
        x = np.asarray(x, dtype=float)
        if x.shape != (STATE_DIM,):
            raise KinematicsError(f"state vector must have 13 entries, got {x.shape}")
        return cls(x[0:3], x[3:7], x[7:10], x[10:13])


@dataclass(frozen=True, eq=False)
class KinematicMaps:
    """J, Jdot, B_kin and B_e evaluated at one joint state."""

    J: np.ndarray
    Jdot: np.ndarray
    B_kin: np.ndarray
    B_e: np.ndarray


def _as_joint_vector(chain: ChainModel, v, label: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (chain.n_joints,):
        raise KinematicsError(
            f"{label} has shape {v.shape}, chain '{chain.name}' "
            f"has {chain.n_joints} joints"
        )
    return v


def joint_frames(
    chain: ChainModel, q: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Walk the chain once.

    Returns:
        (origins, axes, p_e, R_e): world-frame joint origins (n x 3), world
        joint axes (n x 3) and the end-effector pose.
    """
    q = _as_joint_vector(chain, q, "q")
    n = chain.n_joints
    origins = np.zeros((n, 3))
    axes = np.zeros((n, 3))
    rot = chain.base_transform.rotation
    pos = chain.base_transform.translation
    for i, module in enumerate(chain.modules):
        pos = rot @ module.parent_transform.translation + pos
        rot = rot @ module.parent_transform.rotation
        origins[i] = pos
        axes[i] = rot @ module.axis
        rot = rot @ axis_angle(module.axis, q[i])
    p_e = rot @ chain.tool_transform.translation + pos
    r_e = rot @ chain.tool_transform.rotation
    return origins, axes, p_e, r_e


def forward_kinematics(chain: ChainModel, q) -> Tuple[np.ndarray, np.ndarray]:
    """
    End-effector pose in the world frame.

    Args:
        chain: The chain to evaluate.
        q: Joint positions, length n_j.

    Returns:
        (p, R) position and rotation matrix.

    Raises:
        KinematicsError: On a dimension mismatch.
    """
    _, _, p_e, r_e = joint_frames(chain, q)
    return p_e, r_e


def jacobian(chain: ChainModel, q) -> np.ndarray:
    """
    Geometric Jacobian (6 x n_j), linear rows first, world frame.

    Column i is (z_i x (p_e - p_i), z_i).
    """
    origins, axes, p_e, _ = joint_frames(chain, q)
    j = np.zeros((6, chain.n_joints))
    j[:3] = np.cross(axes, p_e - origins).T
    j[3:] = axes.T
    return j


def jacobian_dot(chain: ChainModel, q, qd) -> np.ndarray:
    """
    Time derivative of the geometric Jacobian along joint velocity ``qd``.

    Computed by velocity propagation: the world axis of joint i turns with
    the angular velocity of the links before it, and every joint origin
    moves with the linear velocity those links induce.
    """
    qd = _as_joint_vector(chain, qd, "qd")
    origins, axes, p_e, _ = joint_frames(chain, q)
    n = chain.n_joints

    p_e_dot = np.zeros(3)
    for j in range(n):
        p_e_dot += qd[j] * np.cross(axes[j], p_e - origins[j])

    jdot = np.zeros((6, n))
    omega = np.zeros(3)  # angular velocity of the link carrying joint i
    for i in range(n):
        z_dot = np.cross(omega, axes[i])
        p_i_dot = np.zeros(3)
        for j in range(i):
            p_i_dot += qd[j] * np.cross(axes[j], origins[i] - origins[j])
        jdot[:3, i] = np.cross(z_dot, p_e - origins[i]) + np.cross(
            axes[i], p_e_dot - p_i_dot
        )
        jdot[3:, i] = z_dot
        omega = omega + qd[i] * axes[i]
    return jdot


def quat_rate_matrix(o) -> np.ndarray:
    """
    4x3 matrix G(o) with odot = 0.5 * G(o) @ w for world-frame w.

    G(o) = [-eps^T; eta*I - skew(eps)].

    Raises:
        KinematicsError: If ``o`` is not unit within 1e-9.
    """
    o = np.asarray(o, dtype=float)
    if o.shape != (4,) or abs(np.linalg.norm(o) - 1.0) > 1e-9:
        raise KinematicsError("quat_rate_matrix needs a unit quaternion")
    eta, eps = o[0], o[1:]
    g = np.zeros((4, 3))
    g[0] = -eps
    g[1:] = eta * np.eye(3) - skew(eps)
    return g


def build_b_kin(chain: ChainModel, s: JointState) -> np.ndarray:
    """Stacked 12 x 2n_j mapping [[J, 0], [Jdot, J]] at joint state ``s``."""
    j = jacobian(chain, s.q)
    jdot = jacobian_dot(chain, s.q, s.qd)
    n = chain.n_joints
    b = np.zeros((12, 2 * n))
    b[:6, :n] = j
    b[6:, :n] = jdot
    b[6:, n:] = j
    return b


def build_b_e(o, dt: float) -> np.ndarray:
    """
    13 x 12 forward-Euler increment map for the state [p, o, pd, w].

    Raises:
        KinematicsError: If ``dt`` is not positive or ``o`` is not unit.
    """
    if not dt > 0.0:
        raise KinematicsError(f"dt must be positive, got {dt}")
    b = np.zeros((STATE_DIM, INCREMENT_DIM))
    b[0:3, 0:3] = np.eye(3) * dt
    b[3:7, 3:6] = 0.5 * quat_rate_matrix(o) * dt
    b[7:10, 6:9] = np.eye(3) * dt
    b[10:13, 9:12] = np.eye(3) * dt
    return b


def end_effector_state(chain: ChainModel, s: JointState) -> EndEffectorState:
    """Pose from forward kinematics and twist from J(q) @ qd."""
    origins, axes, p_e, r_e = joint_frames(chain, s.q)
    qd = _as_joint_vector(chain, s.qd, "qd")
    pd = np.cross(axes, p_e - origins).T @ qd
    w = axes.T @ qd
    return EndEffectorState(p_e, quat_from_matrix(r_e), pd, w)


def kinematic_maps(
    chain: ChainModel, s: JointState, dt: float, o: Optional[np.ndarray] = None
) -> KinematicMaps:
    """
    Evaluate all mapping matrices at ``s``.

    Args:
        chain: The chain.
        s: Linearization point.
        dt: Integration step for B_e.
        o: Quaternion for B_e; defaults to the end-effector orientation at s.
    """
    if o is None:
        o = end_effector_state(chain, s).o
    b_kin = build_b_kin(chain, s)
    n = chain.n_joints
    return KinematicMaps(
        J=b_kin[:6, :n].copy(),
        Jdot=b_kin[6:, :n].copy(),
        B_kin=b_kin,
        B_e=build_b_e(o, dt),
    )
