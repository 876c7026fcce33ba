"""
Trajectory Generation - task-space references for the controllers.

Positions follow a piecewise cubic through the waypoints; orientation
follows the SO(3) geodesic from the initial to the goal rotation over the
same total duration. ``build_reference`` samples both on the control grid.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from so3 import exp_so3, is_rotation, log_so3, quat_from_matrix

logger = logging.getLogger(__name__)

TIME_SLACK = 1e-9
PI_MARGIN = 1e-9


class TrajectoryError(ValueError):
    """Raised when a reference trajectory cannot be generated."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Waypoint:
    """Task-space waypoint; ``R`` only matters on the first and last one."""

    p: np.ndarray
    R: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise TrajectoryError(f"waypoint position must be a finite 3-vector: {p}")
        object.__setattr__(self, "p", p)
        if self.R is not None:
            r = np.asarray(self.R, dtype=float)
            if not is_rotation(r):
                raise TrajectoryError("waypoint orientation is not a rotation matrix")
            object.__setattr__(self, "R", r)


@dataclass(frozen=True, eq=False)
class PolynomialSegment:
    """Cubic p(tau) = sum_k coefficients[k] * tau**k, tau in [0, duration]."""

    duration: float
    coefficients: np.ndarray  # 4 x 3


@dataclass(frozen=True, eq=False)
class PositionTrajectory:
    segments: Tuple[PolynomialSegment, ...]

    @property
    def knot_times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    @property
    def duration(self) -> float:
        return float(self.knot_times[-1])


@dataclass(frozen=True, eq=False)
class OrientationTrajectory:
    """Geodesic R(t) = R_in exp(t * skew(Omega)), Omega the constant body rate."""

    R_in: np.ndarray
    R_d: np.ndarray
    T: float
    Omega: np.ndarray


@dataclass(frozen=True, eq=False)
class ReferenceWindow:
    """Reference samples for one horizon; index 0 is the current cycle."""

    p: np.ndarray
    o: np.ndarray
    pd: np.ndarray
    w: np.ndarray

    def __len__(self) -> int:
        return self.p.shape[0]

    def state_vector(self, k: int) -> np.ndarray:
        return np.concatenate([self.p[k], self.o[k], self.pd[k], self.w[k]])


@dataclass(frozen=True, eq=False)
class ReferenceTrajectory:
    """Synchronized position/orientation samples at t = k * dt."""

    dt: float
    times: np.ndarray
    p: np.ndarray
    o: np.ndarray
    pd: np.ndarray
    w: np.ndarray

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def state_vector(self, k: int) -> np.ndarray:
        return np.concatenate([self.p[k], self.o[k], self.pd[k], self.w[k]])

    def window(self, k: int, length: int) -> ReferenceWindow:
        """
        Samples k .. k + length - 1.

        Past the end the final pose is held with zero velocity.
        """
        last = len(self) - 1
        idx = np.minimum(np.arange(k, k + length), last)
        beyond = np.arange(k, k + length) > last
        pd = self.pd[idx].copy()
        w = self.w[idx].copy()
        pd[beyond] = 0.0
        w[beyond] = 0.0
        return ReferenceWindow(self.p[idx].copy(), self.o[idx].copy(), pd, w)


def _hermite(p0, p1, v0, v1, t) -> np.ndarray:
    dp = p1 - p0
    a2 = (3.0 * dp - (2.0 * v0 + v1) * t) / t**2
    a3 = (-2.0 * dp + (v0 + v1) * t) / t**3
    return np.vstack([p0, v0, a2, a3])


def _segment_peaks(coeffs: np.ndarray, t: float) -> Tuple[float, float]:
    """Peak speed and peak acceleration norm of one cubic segment."""
    a1, a2, a3 = coeffs[1], coeffs[2], coeffs[3]
    # acceleration is linear in tau, so its norm peaks at an endpoint
    acc = max(np.linalg.norm(2 * a2), np.linalg.norm(2 * a2 + 6 * a3 * t))
    # speed extrema where v . a = 0, a cubic in tau
    poly = [
        18.0 * a3 @ a3,
        18.0 * a2 @ a3,
        4.0 * a2 @ a2 + 6.0 * a1 @ a3,
        2.0 * a1 @ a2,
    ]
    candidates = [0.0, t]
    if np.any(np.abs(poly) > 0.0):
        for root in np.roots(np.trim_zeros(poly, "f")):
            if abs(root.imag) < 1e-12 and 0.0 < root.real < t:
                candidates.append(root.real)
    speed = max(np.linalg.norm(a1 + 2 * a2 * c + 3 * a3 * c * c) for c in candidates)
    return float(speed), float(acc)


def fit_position_trajectory(
    waypoints: Sequence[Waypoint], v_max: float, a_max: float
) -> PositionTrajectory:
    """
    Fit a C1 piecewise cubic through the waypoints.

    End velocities are zero, interior velocities follow Catmull-Rom
    differences, and durations are stretched until sampled speed and
    acceleration stay within ``v_max`` and ``a_max``.

    Raises:
        TrajectoryError: For fewer than two waypoints, non-positive limits
            or zero-length segments.
    """
    if len(waypoints) < 2:
        raise TrajectoryError("at least two waypoints are required")
    if not (v_max > 0.0 and a_max > 0.0):
        raise TrajectoryError("v_max and a_max must be positive")

    pts = np.array([w.p for w in waypoints])
    lengths = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    for i, d in enumerate(lengths):
        if d < 1e-12:
            raise TrajectoryError(f"waypoints {i} and {i + 1} coincide")

    durations = np.maximum(1.5 * lengths / v_max, np.sqrt(6.0 * lengths / a_max))

    vel = np.zeros_like(pts)
    for i in range(1, len(pts) - 1):
        vel[i] = (pts[i + 1] - pts[i - 1]) / (durations[i - 1] + durations[i])

    coeffs = [
        _hermite(pts[i], pts[i + 1], vel[i], vel[i + 1], durations[i])
        for i in range(len(durations))
    ]
    peaks = [_segment_peaks(c, t) for c, t in zip(coeffs, durations)]
    peak_v = max(p[0] for p in peaks)
    peak_a = max(p[1] for p in peaks)
    stretch = max(1.0, peak_v / v_max, math.sqrt(peak_a / a_max))

    if stretch > 1.0:
        logger.debug(f"Stretching trajectory timing by {stretch:.4f}")
        durations = durations * stretch
        vel = vel / stretch
        coeffs = [
            _hermite(pts[i], pts[i + 1], vel[i], vel[i + 1], durations[i])
            for i in range(len(durations))
        ]

    segments = tuple(
        PolynomialSegment(float(t), c) for t, c in zip(durations, coeffs)
    )
    return PositionTrajectory(segments)


def sample_position(
    traj: PositionTrajectory, t: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Position, velocity and acceleration at time ``t``.

    Raises:
        TrajectoryError: If ``t`` lies outside [-1e-9, T + 1e-9].
    """
    knots = traj.knot_times
    total = knots[-1]
    if t < -TIME_SLACK or t > total + TIME_SLACK:
        raise TrajectoryError(f"t={t} outside [0, {total}]")
    t = min(max(t, 0.0), total)
    i = int(np.searchsorted(knots, t, side="right")) - 1
    i = min(max(i, 0), len(traj.segments) - 1)
    seg = traj.segments[i]
    tau = min(t - knots[i], seg.duration)
    a = seg.coefficients
    p = a[0] + a[1] * tau + a[2] * tau**2 + a[3] * tau**3
    v = a[1] + 2 * a[2] * tau + 3 * a[3] * tau**2
    acc = 2 * a[2] + 6 * a[3] * tau
    return p, v, acc


def make_orientation_trajectory(R_in, R_d, T: float) -> OrientationTrajectory:
    """
    Geodesic orientation trajectory from ``R_in`` to ``R_d`` over ``T``.

    Raises:
        TrajectoryError: For invalid rotations, non-positive ``T`` or a
            relative rotation of pi (the log map has no unique branch there;
            insert an intermediate orientation instead).
    """
    if not (is_rotation(R_in) and is_rotation(R_d)):
        raise TrajectoryError("orientation endpoints must be rotation matrices")
    if not T > 0.0:
        raise TrajectoryError(f"orientation duration must be positive, got {T}")
    R_in = np.asarray(R_in, dtype=float)
    R_d = np.asarray(R_d, dtype=float)
    rotvec = log_so3(R_in.T @ R_d)
    angle = float(np.linalg.norm(rotvec))
    if angle >= math.pi - PI_MARGIN:
        raise TrajectoryError(
            "relative rotation of pi between start and goal orientation; "
            "add an intermediate orientation"
        )
    return OrientationTrajectory(R_in, R_d, float(T), rotvec / T)


def sample_orientation(
    traj: OrientationTrajectory, t: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Rotation and world-frame angular velocity at time ``t``."""
    if t < -TIME_SLACK or t > traj.T + TIME_SLACK:
        raise TrajectoryError(f"t={t} outside [0, {traj.T}]")
    t = min(max(t, 0.0), traj.T)
    if t == traj.T:
        rot = traj.R_d
    else:
        rot = traj.R_in @ exp_so3(t * traj.Omega)
    return rot, rot @ traj.Omega


def build_reference(
    ptraj: PositionTrajectory, otraj: OrientationTrajectory, dt: float
) -> ReferenceTrajectory:
    """
    Sample both trajectories at k * dt, the final sample exactly at T.

    Raises:
        TrajectoryError: If durations differ, dt <= 0 or dt > T.
    """
    total = ptraj.duration
    if abs(otraj.T - total) > TIME_SLACK:
        raise TrajectoryError(
            f"orientation duration {otraj.T} differs from position duration {total}"
        )
    if not dt > 0.0:
        raise TrajectoryError(f"dt must be positive, got {dt}")
    if dt > total + TIME_SLACK:
        raise TrajectoryError(f"dt={dt} exceeds trajectory duration {total}")

    count = math.ceil(total / dt - TIME_SLACK) + 1
    times = np.arange(count, dtype=float) * dt
    times[-1] = total

    p = np.zeros((count, 3))
    pd = np.zeros((count, 3))
    o = np.zeros((count, 4))
    w = np.zeros((count, 3))
    for k, t in enumerate(times):
        p[k], pd[k], _ = sample_position(ptraj, t)
        rot, w[k] = sample_orientation(otraj, t)
        o[k] = quat_from_matrix(rot)
    return ReferenceTrajectory(float(dt), times, p, o, pd, w)


def reference_from_waypoints(
    waypoints: List[Waypoint], v_max: float, a_max: float, dt: float
) -> ReferenceTrajectory:
    """
    Fit, time and sample a reference in one call.

    The first and last waypoints must carry orientations.
    """
    if waypoints[0].R is None or waypoints[-1].R is None:
        raise TrajectoryError("first and last waypoints need orientations")
    ptraj = fit_position_trajectory(waypoints, v_max, a_max)
    otraj = make_orientation_trajectory(
        waypoints[0].R, waypoints[-1].R, ptraj.duration
    )
    return build_reference(ptraj, otraj, dt)


def hold_reference(p, R, T: float, dt: float) -> ReferenceTrajectory:
    """
    A stationary reference at pose (p, R) for ``T`` seconds.

    Used for regulation tasks whose start and goal coincide.
    """
    if not dt > 0.0 or not T > 0.0:
        raise TrajectoryError(f"dt and T must be positive, got dt={dt}, T={T}")
    if not is_rotation(R):
        raise TrajectoryError("hold orientation must be a rotation matrix")
    count = math.ceil(T / dt - TIME_SLACK) + 1
    times = np.arange(count, dtype=float) * dt
    times[-1] = T
    p = np.tile(np.asarray(p, dtype=float), (count, 1))
    o = np.tile(quat_from_matrix(R), (count, 1))
    zeros = np.zeros((count, 3))
    return ReferenceTrajectory(float(dt), times, p, o, zeros, zeros.copy())
