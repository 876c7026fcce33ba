"""
Core controller types and the abstract controller interface.

This module contains the weight, horizon, limit and output types shared by
the weighted MPC, HQP and hierarchical MPC controllers, plus the stateful
``Controller`` base class that applies the soft-failure policy.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from chain_model import ChainModel, EndEffectorState, JointState, end_effector_state
from config import ControllerDefaults, SolverConfig, get_config
from trajectory import ReferenceWindow

logger = logging.getLogger(__name__)

TASK_DIM = 6
ERROR_DIM = 12


class ControlStatus(Enum):
    """How the applied input was obtained."""

    OPTIMAL = "optimal"
    RELAXED = "relaxed"  # coupling replaced by a penalty
    FAILED = "failed"
    HELD = "held"  # previous input re-applied
    ZEROED = "zeroed"


def lift_priority(P: Sequence[int]) -> np.ndarray:
    """Map the 6-dim task selector onto the 12 error rows [p, o, pd, w]."""
    P = np.asarray(P, dtype=float)
    return np.concatenate([P[:3], P[3:], P[:3], P[3:]])


def check_priority(P: Sequence[int], n_joints: int) -> None:
    """
    Both the selected and the unselected task sets must be smaller than n_j.

    Raises:
        ValueError: If either popcount reaches the number of joints.
    """
    selected = int(np.sum(P))
    if selected >= n_joints or TASK_DIM - selected >= n_joints:
        raise ValueError(
            f"priority {tuple(int(p) for p in P)} selects {selected} task axes; "
            f"both {selected} and {TASK_DIM - selected} must be < {n_joints} joints"
        )


def scale_weight(Q: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """D Q D with D = diag(sqrt(scale)); equals Q * diag(scale) for diagonal Q."""
    d = np.sqrt(np.asarray(scale, dtype=float))
    return Q * np.outer(d, d)


@dataclass(eq=False)
class ControllerWeights:
    """State-error weight Q (12x12), input weight R (2n x 2n), priority P."""

    Q: np.ndarray
    R: np.ndarray
    P: Tuple[int, ...] = (1, 1, 1, 0, 0, 0)

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.P = tuple(int(p) for p in self.P)
        if self.Q.shape != (ERROR_DIM, ERROR_DIM):
            raise ValueError(f"Q must be 12x12, got {self.Q.shape}")
        if self.R.ndim != 2 or self.R.shape[0] != self.R.shape[1]:
            raise ValueError(f"R must be square, got {self.R.shape}")
        if len(self.P) != TASK_DIM or any(p not in (0, 1) for p in self.P):
            raise ValueError(f"P must be a binary 6-vector, got {self.P}")
        if np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T)).min() < -1e-10:
            raise ValueError("Q must be positive semi-definite")
        if np.linalg.eigvalsh(0.5 * (self.R + self.R.T)).min() <= 0.0:
            raise ValueError("R must be positive definite")

    @property
    def n_joints(self) -> int:
        return self.R.shape[0] // 2

    @classmethod
    def default(
        cls,
        n_joints: int,
        defaults: Optional[ControllerDefaults] = None,
        priority: Optional[Sequence[int]] = None,
    ) -> "ControllerWeights":
        """Diagonal weights from the configured gains."""
        d = defaults or get_config().controller
        diag = np.concatenate(
            [
                np.full(3, d.q_position),
                np.full(3, d.q_orientation),
                np.full(6, d.q_velocity),
            ]
        )
        return cls(
            Q=np.diag(diag),
            R=np.eye(2 * n_joints) * d.r_input,
            P=tuple(priority if priority is not None else d.priority),
        )


@dataclass
class HorizonConfig:
    """Horizons in steps and the control period in seconds."""

    N: int = 10
    N_h: int = 10
    N_l: int = 10
    dt: float = 0.01

    def __post_init__(self):
        for label in ("N", "N_h", "N_l"):
            if int(getattr(self, label)) < 1:
                raise ValueError(f"horizon {label} must be >= 1")
        if self.N_l > self.N_h:
            raise ValueError(f"N_l={self.N_l} exceeds N_h={self.N_h}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @classmethod
    def from_defaults(cls, defaults: Optional[ControllerDefaults] = None):
        d = defaults or get_config().controller
        return cls(N=d.horizon, N_h=d.horizon_high, N_l=d.horizon_low, dt=d.dt)


@dataclass(eq=False)
class JointLimits:
    """Position box and symmetric velocity/acceleration limits."""

    q_lower: np.ndarray
    q_upper: np.ndarray
    qd_max: np.ndarray
    qdd_max: np.ndarray

    def __post_init__(self):
        self.q_lower = np.asarray(self.q_lower, dtype=float)
        self.q_upper = np.asarray(self.q_upper, dtype=float)
        self.qd_max = np.asarray(self.qd_max, dtype=float)
        self.qdd_max = np.asarray(self.qdd_max, dtype=float)
        vectors = (self.q_lower, self.q_upper, self.qd_max, self.qdd_max)
        shapes = {v.shape for v in vectors}
        if len(shapes) != 1:
            raise ValueError(f"limit vectors have mismatched shapes: {shapes}")

    @property
    def n_joints(self) -> int:
        return self.q_lower.shape[0]

    @classmethod
    def from_chain(cls, chain: ChainModel) -> "JointLimits":
        return cls(chain.q_lower, chain.q_upper, chain.qd_max, chain.qdd_max)

    def admits(
        self, q: np.ndarray, u: np.ndarray, dt: float, tol: float = 1e-9
    ) -> bool:
        """True if applying ``u`` for one step keeps every box satisfied."""
        n = self.n_joints
        qd_cmd, qdd_cmd = u[:n], u[n:]
        q_next = q + qd_cmd * dt + 0.5 * qdd_cmd * dt * dt
        qd_next = qd_cmd + qdd_cmd * dt
        return bool(
            np.all(np.abs(qd_cmd) <= self.qd_max + tol)
            and np.all(np.abs(qdd_cmd) <= self.qdd_max + tol)
            and np.all(np.abs(qd_next) <= self.qd_max + tol)
            and np.all(q_next >= self.q_lower - tol)
            and np.all(q_next <= self.q_upper + tol)
        )


@dataclass(eq=False)
class JointPrediction:
    """High-level rollout: (N_h + 1) positions/velocities and N_h inputs."""

    q_seq: np.ndarray
    qd_seq: np.ndarray
    u_seq: np.ndarray

    @property
    def steps(self) -> int:
        return self.u_seq.shape[0]


@dataclass(eq=False)
class ControlOutput:
    """First-step input [qd; qdd] plus solve bookkeeping."""

    u: np.ndarray
    predicted_cost: float = 0.0
    qp_status: str = "optimal"
    solve_time: float = 0.0
    status: ControlStatus = ControlStatus.OPTIMAL
    u_seq: Optional[np.ndarray] = None
    timings: Dict[str, float] = field(default_factory=dict)
    levels: Dict[str, str] = field(default_factory=dict)

    @property
    def succeeded(self) -> bool:
        return self.status in (ControlStatus.OPTIMAL, ControlStatus.RELAXED)


def shift_sequence(u_seq: Optional[np.ndarray], steps: int) -> Optional[np.ndarray]:
    """Drop the applied input and repeat the last one, resized to ``steps``."""
    if u_seq is None or u_seq.shape[0] == 0:
        return None
    shifted = np.vstack([u_seq[1:], u_seq[-1:]])
    if shifted.shape[0] >= steps:
        return shifted[:steps]
    pad = np.repeat(shifted[-1:], steps - shifted.shape[0], axis=0)
    return np.vstack([shifted, pad])


class Controller(ABC):
    """
    Abstract base class for receding-horizon controllers.

    Subclasses implement ``compute``; ``step`` wraps it with the
    soft-failure policy: a failed solve re-applies the previous input for
    at most ``max_held_cycles`` cycles (and only while it keeps the joints
    inside their limits), after that the input is zeroed.
    """

    def __init__(
        self,
        weights: Optional[ControllerWeights] = None,
        horizon: Optional[HorizonConfig] = None,
        defaults: Optional[ControllerDefaults] = None,
        solver_config: Optional[SolverConfig] = None,
    ):
        self.defaults = defaults or get_config().controller
        self.weights = weights
        self.horizon = horizon or HorizonConfig.from_defaults(self.defaults)
        self.solver_config = solver_config or get_config().solver
        self._previous_u: Optional[np.ndarray] = None
        self._held_cycles = 0

    @property
    @abstractmethod
    def name(self) -> str:
        """Unique identifier for this controller (e.g., 'hmpc')."""
        pass

    @property
    @abstractmethod
    def version(self) -> str:
        """Controller version string."""
        pass

    @property
    def aliases(self) -> Tuple[str, ...]:
        """Alternative names accepted by the registry."""
        return ()

    @property
    @abstractmethod
    def window_length(self) -> int:
        """Number of reference samples (current one included) per step."""
        pass

    @abstractmethod
    def compute(
        self,
        chain: ChainModel,
        x0: EndEffectorState,
        state: JointState,
        ref: ReferenceWindow,
        limits: JointLimits,
    ) -> ControlOutput:
        """Solve for the next input without any fallback handling."""
        pass

    def reset(self) -> None:
        """Forget warm-start and fallback memory."""
        self._previous_u = None
        self._held_cycles = 0

    def weights_for(self, chain: ChainModel) -> ControllerWeights:
        if self.weights is None or self.weights.n_joints != chain.n_joints:
            self.weights = ControllerWeights.default(chain.n_joints, self.defaults)
        return self.weights

    def step(
        self, chain: ChainModel, state: JointState, ref: ReferenceWindow
    ) -> ControlOutput:
        """Compute and return the input to apply this cycle."""
        limits = JointLimits.from_chain(chain)
        x0 = end_effector_state(chain, state)
        out = self.compute(chain, x0, state, ref, limits)
        if out.succeeded:
            self._previous_u = out.u.copy()
            self._held_cycles = 0
            return out
        return self._fallback(out, state, limits)

    def _fallback(
        self, out: ControlOutput, state: JointState, limits: JointLimits
    ) -> ControlOutput:
        dt = self.horizon.dt
        prev = self._previous_u
        if (
            prev is not None
            and self._held_cycles < self.defaults.max_held_cycles
            and limits.admits(state.q, prev, dt)
        ):
            self._held_cycles += 1
            logger.warning(
                f"{self.name}: solve {out.qp_status}, holding previous input "
                f"({self._held_cycles}/{self.defaults.max_held_cycles})"
            )
            out.u = prev.copy()
            out.status = ControlStatus.HELD
            return out

        logger.warning(f"{self.name}: solve {out.qp_status}, applying zero input")
        out.u = np.zeros(2 * limits.n_joints)
        out.status = ControlStatus.ZEROED
        self._previous_u = None
        self._held_cycles = 0
        return out
