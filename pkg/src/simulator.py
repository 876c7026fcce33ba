"""
Closed-Loop Simulator - runs a controller against an ideal kinematic plant.

Each cycle reads the end-effector state, asks the controller for the input
[qd_cmd; qdd_cmd], logs everything and integrates the joints. Independent
scenarios can be run in parallel with ``run_many``.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from chain_model import ChainModel, JointState, end_effector_state, forward_kinematics
from config import get_config
from metrics import TrackingErrors, tracking_errors
from so3 import exp_so3, log_so3
from trajectory import (
    ReferenceTrajectory,
    TrajectoryError,
    Waypoint,
    hold_reference,
    reference_from_waypoints,
)

logger = logging.getLogger(__name__)

COINCIDENT_TOL = 1e-9


class ScenarioError(ValueError):
    """Raised when a scenario cannot be turned into a closed-loop run."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


def integrate_joints(
    q: np.ndarray, qd: np.ndarray, u: np.ndarray, dt: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    One step of the kinematic plant.

    The commanded velocity is the realized velocity over the step, so the
    incoming ``qd`` does not enter the update.
    """
    n = q.shape[0]
    qd_cmd, qdd_cmd = u[:n], u[n:]
    return q + qd_cmd * dt + 0.5 * qdd_cmd * dt * dt, qd_cmd + qdd_cmd * dt


# Scenario models


class WeightOverrides(BaseModel):
    """Optional replacements for the configured controller gains."""

    q_position: Optional[float] = Field(None, gt=0)
    q_orientation: Optional[float] = Field(None, gt=0)
    q_velocity: Optional[float] = Field(None, ge=0)
    r_input: Optional[float] = Field(None, gt=0)
    secondary_ratio: Optional[float] = Field(None, gt=0)
    coupling_penalty: Optional[float] = Field(None, gt=0)
    priority: Optional[List[int]] = None

    model_config = ConfigDict(extra="forbid")

    @field_validator("priority")
    @classmethod
    def validate_priority(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        if v is not None and (len(v) != 6 or any(p not in (0, 1) for p in v)):
            raise ValueError("priority must be six 0/1 entries")
        return v


class HorizonOverrides(BaseModel):
    """Optional horizon lengths in steps."""

    N: Optional[int] = Field(None, ge=1)
    N_h: Optional[int] = Field(None, ge=1)
    N_l: Optional[int] = Field(None, ge=1)

    model_config = ConfigDict(extra="forbid")


class Scenario(BaseModel):
    """One closed-loop task: chain, start state, waypoints and controller."""

    name: str = "scenario"
    chain: Union[str, Dict[str, Any]]
    initial_q: Optional[List[float]] = None
    initial_qd: Optional[List[float]] = None
    waypoints: List[List[float]] = Field(..., min_length=1)
    # absolute goal orientation as a rotation vector; None keeps the start one
    orientation_goal: Optional[List[float]] = None
    controller: str = "hmpc"
    weights: WeightOverrides = Field(default_factory=WeightOverrides)
    horizons: HorizonOverrides = Field(default_factory=HorizonOverrides)
    dt: float = Field(0.01, gt=0)
    v_max: float = Field(0.15, gt=0)
    a_max: float = Field(0.3, gt=0)
    seed: int = 0
    max_cycles: Optional[int] = Field(None, ge=1)
    noise_std: float = Field(0.0, ge=0)
    hold_time: float = Field(1.0, gt=0)
    start_from_current: bool = True

    model_config = ConfigDict(extra="forbid")

    @field_validator("controller")
    @classmethod
    def normalize_controller(cls, v: str) -> str:
        v = v.lower()
        if v == "weighted_mpc":
            return "mpc"
        if v not in ("hmpc", "mpc", "hqp"):
            raise ValueError(f"unknown controller '{v}' (hmpc, mpc, weighted_mpc, hqp)")
        return v

    @field_validator("waypoints")
    @classmethod
    def validate_waypoints(cls, v: List[List[float]]) -> List[List[float]]:
        for i, p in enumerate(v):
            if len(p) != 3 or not all(math.isfinite(c) for c in p):
                raise ValueError(f"waypoint {i} must be three finite numbers")
        return v

    @field_validator("orientation_goal")
    @classmethod
    def validate_goal(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and (len(v) != 3 or not all(math.isfinite(c) for c in v)):
            raise ValueError("orientation_goal must be a finite rotation vector")
        return v


@dataclass(eq=False)
class ExecutionLog:
    """Per-cycle record of one closed-loop run."""

    scenario: Dict[str, Any]
    chain_name: str
    controller: str
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    u: np.ndarray
    x: np.ndarray  # n x 13 end-effector states
    x_ref: np.ndarray  # n x 13 reference states
    e_p: np.ndarray
    e_o: np.ndarray
    status: List[str] = field(default_factory=list)
    solve_time: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def cycles(self) -> int:
        return self.t.shape[0]

    @property
    def n_joints(self) -> int:
        return self.q.shape[1]

    def errors(self) -> TrackingErrors:
        return TrackingErrors(self.e_p, self.e_o)

    def status_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for s in self.status:
            counts[s] = counts.get(s, 0) + 1
        return counts


# Scenario preparation


def _resolve_chain(sc: Scenario) -> ChainModel:
    from morphologies import resolve_chain

    return resolve_chain(sc.chain)


def initial_state(sc: Scenario, chain: ChainModel) -> JointState:
    """
    Start state of a scenario, checked against the joint limits.

    Raises:
        ScenarioError: On dimension mismatch or a start outside the limits.
    """
    n = chain.n_joints
    q0 = np.zeros(n) if sc.initial_q is None else np.asarray(sc.initial_q, float)
    qd0 = np.zeros(n) if sc.initial_qd is None else np.asarray(sc.initial_qd, float)
    if q0.shape != (n,) or qd0.shape != (n,):
        raise ScenarioError(
            f"initial state has {q0.shape[0]}/{qd0.shape[0]} entries, "
            f"chain '{chain.name}' has {n} joints"
        )
    outside = np.flatnonzero((q0 < chain.q_lower) | (q0 > chain.q_upper))
    if outside.size:
        raise ScenarioError(
            f"initial_q outside joint limits at joints {outside.tolist()}"
        )
    if np.any(np.abs(qd0) > chain.qd_max):
        raise ScenarioError("initial_qd exceeds the joint velocity limits")
    return JointState(q0, qd0)


def build_scenario_reference(
    sc: Scenario, chain: ChainModel, state: JointState
) -> ReferenceTrajectory:
    """
    Reference for a scenario, starting from the initial end-effector pose.

    Raises:
        TrajectoryError: If no reference can be generated.
    """
    p0, R_in = forward_kinematics(chain, state.q)
    R_goal = R_in if sc.orientation_goal is None else exp_so3(sc.orientation_goal)

    points = [np.asarray(p, dtype=float) for p in sc.waypoints]
    if sc.start_from_current and np.linalg.norm(points[0] - p0) > COINCIDENT_TOL:
        points.insert(0, p0)

    if len(points) == 1 or all(
        np.linalg.norm(p - points[0]) <= COINCIDENT_TOL for p in points[1:]
    ):
        if np.linalg.norm(log_so3(R_in.T @ R_goal)) > COINCIDENT_TOL:
            raise TrajectoryError(
                "start and goal positions coincide but orientations differ; "
                "add an intermediate waypoint"
            )
        return hold_reference(points[0], R_in, sc.hold_time, sc.dt)

    waypoints = [Waypoint(points[0], R_in)]
    waypoints += [Waypoint(p) for p in points[1:-1]]
    waypoints.append(Waypoint(points[-1], R_goal))
    return reference_from_waypoints(waypoints, sc.v_max, sc.a_max, sc.dt)


def make_controller(sc: Scenario):
    """Fresh controller instance with the scenario's overrides applied."""
    from controllers.base import HorizonConfig
    from controllers.registry import create_controller

    cfg = get_config()
    overrides = {k: v for k, v in sc.weights.model_dump().items() if v is not None}
    if "priority" in overrides:
        overrides["priority"] = tuple(overrides["priority"])
    defaults = replace(cfg.controller, **overrides)
    horizon = HorizonConfig(
        N=sc.horizons.N or defaults.horizon,
        N_h=sc.horizons.N_h or defaults.horizon_high,
        N_l=sc.horizons.N_l or defaults.horizon_low,
        dt=sc.dt,
    )
    return create_controller(
        sc.controller, horizon=horizon, defaults=defaults, solver_config=cfg.solver
    )


# Closed loop


def run_closed_loop(
    sc: Scenario,
    chain: Optional[ChainModel] = None,
    reference: Optional[ReferenceTrajectory] = None,
) -> ExecutionLog:
    """
    Execute ``n = ceil(T / dt)`` control cycles of a scenario.

    Args:
        sc: The scenario.
        chain: Pre-resolved chain; resolved from ``sc.chain`` when omitted.
        reference: Pre-built reference, shared across controllers by
            comparisons; built from the scenario when omitted.

    Raises:
        ScenarioError: If the start state is invalid.
        TrajectoryError: If the reference cannot be generated.
    """
    chain = chain or _resolve_chain(sc)
    state = initial_state(sc, chain)
    ref = reference or build_scenario_reference(sc, chain, state)
    controller = make_controller(sc)
    rng = np.random.default_rng(sc.seed)

    cycles = math.ceil(ref.duration / sc.dt - 1e-9)
    if sc.max_cycles is not None:
        cycles = min(cycles, sc.max_cycles)
    n = chain.n_joints
    logger.info(
        f"Running {sc.name}: {controller.name} on {chain.name}, "
        f"{cycles} cycles at dt={sc.dt}"
    )

    t = np.arange(cycles, dtype=float) * sc.dt
    q_log = np.zeros((cycles, n))
    qd_log = np.zeros((cycles, n))
    u_log = np.zeros((cycles, 2 * n))
    x_log = np.zeros((cycles, 13))
    xref_log = np.zeros((cycles, 13))
    solve_time = np.zeros(cycles)
    status: List[str] = []

    for k in range(cycles):
        x = end_effector_state(chain, state)
        window = ref.window(k, controller.window_length)
        out = controller.step(chain, state, window)

        q_log[k], qd_log[k], u_log[k] = state.q, state.qd, out.u
        x_log[k] = x.as_vector()
        xref_log[k] = ref.state_vector(k)
        solve_time[k] = out.solve_time
        status.append(out.status.value)

        q_next, qd_next = integrate_joints(state.q, state.qd, out.u, sc.dt)
        if sc.noise_std > 0.0:
            q_next = np.clip(
                q_next + rng.normal(0.0, sc.noise_std, n), chain.q_lower, chain.q_upper
            )
        state = JointState(q_next, qd_next)

    errors = tracking_errors(
        x_log[:, :3], x_log[:, 3:7], xref_log[:, :3], xref_log[:, 3:7]
    )
    log = ExecutionLog(
        scenario=sc.model_dump(),
        chain_name=chain.name,
        controller=controller.name,
        t=t,
        q=q_log,
        qd=qd_log,
        u=u_log,
        x=x_log,
        x_ref=xref_log,
        e_p=errors.e_p,
        e_o=errors.e_o,
        status=status,
        solve_time=solve_time,
    )
    degraded = {k: v for k, v in log.status_counts().items() if k != "optimal"}
    if degraded:
        logger.warning(f"{sc.name}/{controller.name}: degraded cycles {degraded}")
    return log


def _run_one(sc: Scenario) -> ExecutionLog:
    return run_closed_loop(sc)


def run_many(
    scenarios: Sequence[Scenario], max_workers: Optional[int] = None
) -> List[ExecutionLog]:
    """
    Run independent scenarios, in parallel when more than one worker is allowed.

    Results keep the input order. The first failing run's exception is
    re-raised.
    """
    workers = max_workers or get_config().simulation.max_concurrent_runs
    workers = min(workers, len(scenarios))
    if workers <= 1:
        return [_run_one(sc) for sc in scenarios]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_run_one, scenarios))
