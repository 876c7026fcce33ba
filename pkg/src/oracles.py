"""
Verification Oracles - brute-force checks of the kinematics and of the
re-linearized prediction model.

Finite-difference Jacobian and Jacobian-derivative tensors, the second-order
error term of the two-level model with its norm bound, and convergence-order
experiments comparing a prediction model re-linearized along the high-level
rollout against one frozen at the current state. ``run_verification``
bundles everything into pass/fail checks.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from chain_model import ChainModel, forward_kinematics, jacobian, jacobian_dot
from config import VerificationConfig, get_config
from simulator import integrate_joints
from so3 import log_so3

logger = logging.getLogger(__name__)

MAX_STEP_NORM = 0.1  # rad, guard for the small-step error term
REMARK_STEP = 0.02  # rad per 10 ms cycle at 2 rad/s

JacobianFn = Callable[[ChainModel, np.ndarray], np.ndarray]


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _random_q(rng: np.random.Generator, chain: ChainModel, margin: float = 0.9):
    return rng.uniform(margin * chain.q_lower, margin * chain.q_upper)


# Finite-difference tensors


def fd_jacobian(chain: ChainModel, q: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """
    Central-difference geometric Jacobian.

    Position rows differentiate FK directly; orientation rows use the
    rotation vector of R(q + h e_i) R(q - h e_i)^T divided by 2h.
    """
    if not h > 0.0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    q = np.asarray(q, dtype=float)
    n = chain.n_joints
    j = np.zeros((6, n))
    for i in range(n):
        step = np.zeros(n)
        step[i] = h
        p_plus, r_plus = forward_kinematics(chain, q + step)
        p_minus, r_minus = forward_kinematics(chain, q - step)
        j[:3, i] = (p_plus - p_minus) / (2.0 * h)
        j[3:, i] = log_so3(r_plus @ r_minus.T) / (2.0 * h)
    return j


def fd_jacobian_dot(
    chain: ChainModel, q: np.ndarray, qd: np.ndarray, h: float = 1e-6
) -> np.ndarray:
    """Directional central difference of the analytic Jacobian along ``qd``."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    return (jacobian(chain, q + h * qd) - jacobian(chain, q - h * qd)) / (2.0 * h)


def fd_hessian_tensor(chain: ChainModel, q: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """
    Derivative of the analytic Jacobian, H[r, i, j] = dJ[r, j] / dq_i.

    Position rows are symmetric in (i, j); orientation rows generally not.
    """
    if not h > 0.0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    q = np.asarray(q, dtype=float)
    n = chain.n_joints
    tensor = np.zeros((6, n, n))
    for i in range(n):
        step = np.zeros(n)
        step[i] = h
        tensor[:, i, :] = (jacobian(chain, q + step) - jacobian(chain, q - step)) / (
            2.0 * h
        )
    return tensor


def contract(tensor: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Bilinear form a^T H b for every row of the tensor."""
    return np.einsum("rij,i,j->r", tensor, a, b)


def tensor_norm(tensor: np.ndarray) -> float:
    """
    Operator bound used for the error term: sqrt of the summed squared
    spectral norms of the row slices.
    """
    return float(
        math.sqrt(sum(np.linalg.norm(block, 2) ** 2 for block in tensor))
    )


# Error term


def error_term(
    chain: ChainModel,
    q: np.ndarray,
    dq1: np.ndarray,
    dq2: np.ndarray,
    lipschitz: Optional[float] = None,
    h: float = 1e-4,
) -> Tuple[np.ndarray, float]:
    """
    Second-order term the two-level model misses, and its norm bound.

    E = 1/2 a^T H a - 1/2 a^T H b + 1/2 b^T H b with a = dq1, b = dq2 and
    the bound 1/2 L (|a|^2 + |b|^2 + |a||b|). L is ``lipschitz``, the
    workspace constant L_H sampled away from ``q``; without it L is the
    tensor norm at ``q`` (a local bound).

    Raises:
        ValueError: If either step exceeds 0.1 rad.
    """
    a = np.asarray(dq1, dtype=float)
    b = np.asarray(dq2, dtype=float)
    for label, step in (("dq1", a), ("dq2", b)):
        if np.linalg.norm(step) > MAX_STEP_NORM:
            raise ValueError(
                f"{label} norm {np.linalg.norm(step):.4g} exceeds {MAX_STEP_NORM} rad"
            )
    tensor = fd_hessian_tensor(chain, q, h)
    e = 0.5 * contract(tensor, a, a) - 0.5 * contract(tensor, a, b)
    e = e + 0.5 * contract(tensor, b, b)
    big_l = tensor_norm(tensor) if lipschitz is None else float(lipschitz)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    return e, 0.5 * big_l * (na * na + nb * nb + na * nb)


@dataclass
class LipschitzEstimate:
    """Sampled maxima of the Jacobian, its derivative and the Hessian tensor."""

    L_H: float
    L_J: float
    L_Jdot: float
    samples: int

    def as_dict(self) -> Dict[str, float]:
        return {"L_H": self.L_H, "L_J": self.L_J, "L_Jdot": self.L_Jdot}


def lipschitz_constants(
    chain: ChainModel, samples: int = 10000, seed: int = 0, h: float = 1e-4
) -> LipschitzEstimate:
    """
    Empirical bounds over random configurations inside the joint limits.

    L_Jdot is the largest spectral norm of Jdot per unit joint speed.
    """
    rng = np.random.default_rng(seed)
    l_h = l_j = l_jd = 0.0
    for _ in range(samples):
        q = _random_q(rng, chain, 1.0)
        l_h = max(l_h, tensor_norm(fd_hessian_tensor(chain, q, h)))
        l_j = max(l_j, float(np.linalg.norm(jacobian(chain, q), 2)))
        qd = _unit(rng, chain.n_joints)
        l_jd = max(l_jd, float(np.linalg.norm(jacobian_dot(chain, q, qd), 2)))
    logger.debug(f"{chain.name}: L_H={l_h:.4g} L_J={l_j:.4g} L_Jdot={l_jd:.4g}")
    return LipschitzEstimate(l_h, l_j, l_jd, samples)


# Order experiments


@dataclass
class AccelerationReport:
    """Acceleration-model errors: re-linearized (J, Jdot) against frozen."""

    frozen_errors: np.ndarray
    relinearized_errors: np.ndarray
    bound_constant: float
    seeds: Tuple[int, ...]
    violations: int
    win_rate: float


@dataclass
class OrderExperimentReport:
    """Per-step-size prediction errors of the frozen and re-linearized models."""

    step_sizes: Tuple[float, ...]
    frozen_errors: np.ndarray  # trials x step sizes
    relinearized_errors: np.ndarray
    frozen_slope: float
    relinearized_slope: float
    win_rate: float
    neglected_term_scale: float
    horizon: int
    notes: List[str] = field(default_factory=list)
    acceleration: Optional[AccelerationReport] = None

    @property
    def trials(self) -> int:
        return self.frozen_errors.shape[0]

    def median_errors(self) -> Tuple[np.ndarray, np.ndarray]:
        return (
            np.median(self.frozen_errors, axis=0),
            np.median(self.relinearized_errors, axis=0),
        )


def _fit_slope(steps: np.ndarray, errors: np.ndarray, label: str, notes: List[str]):
    if np.any(errors <= 0.0) or np.ptp(errors) == 0.0:
        notes.append(f"{label}: degenerate fit, errors {errors.tolist()}")
        return float("nan")
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


def _velocity_trial(
    chain: ChainModel,
    q0: np.ndarray,
    qd0: np.ndarray,
    qdd_high: np.ndarray,
    deviation: np.ndarray,
    dt: float,
    horizon: int,
) -> Tuple[float, float, float]:
    """
    Mean one-step position prediction errors over steps 1..horizon-1.

    The applied joint motion follows the high-level acceleration plus a
    deviation; the re-linearized model evaluates (J, Jdot) on the
    high-level rollout, the frozen model at the initial state.
    """
    j_frozen = jacobian(chain, q0)[:3]
    jd_frozen = jacobian_dot(chain, q0, qd0)[:3]
    q, qd = q0.copy(), qd0.copy()
    q_high, qd_high = q0.copy(), qd0.copy()
    frozen, relin, squared = [], [], []
    for i in range(horizon):
        q_next, qd_next = integrate_joints(
            q, qd, np.concatenate([qd, qdd_high + deviation]), dt
        )
        dq = q_next - q
        squared.append(float(dq @ dq))
        if i > 0:
            p_now, _ = forward_kinematics(chain, q)
            p_true, _ = forward_kinematics(chain, q_next)
            curvature = 0.5 * dt * dt
            model_f = p_now + j_frozen @ dq + curvature * (jd_frozen @ qd)
            j_r = jacobian(chain, q_high)[:3]
            jd_r = jacobian_dot(chain, q_high, qd_high)[:3]
            model_r = p_now + j_r @ dq + curvature * (jd_r @ qd)
            frozen.append(float(np.linalg.norm(p_true - model_f)))
            relin.append(float(np.linalg.norm(p_true - model_r)))
        q_high, qd_high = integrate_joints(
            q_high, qd_high, np.concatenate([qd_high, qdd_high]), dt
        )
        q, qd = q_next, qd_next
    return float(np.mean(frozen)), float(np.mean(relin)), float(np.median(squared))


def _acceleration_samples(
    chain: ChainModel, samples: int, seed: int, horizon_time: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Frozen errors, re-linearized errors and bound right-hand sides."""
    rng = np.random.default_rng(seed)
    n = chain.n_joints
    qd_scale = float(np.min(chain.qd_max))
    qdd_scale = float(np.min(chain.qdd_max))
    frozen = np.zeros(samples)
    relin = np.zeros(samples)
    rhs = np.zeros(samples)
    for k in range(samples):
        q = _random_q(rng, chain)
        qd1 = _unit(rng, n) * rng.uniform(0.5, 1.0) * qd_scale
        qdd1 = _unit(rng, n) * rng.uniform(0.0, 1.0) * qdd_scale
        qdd2 = _unit(rng, n) * rng.uniform(0.1, 0.3) * qdd_scale
        tau = rng.uniform(0.1, 1.0) * horizon_time

        dq1 = qd1 * tau + 0.5 * qdd1 * tau * tau
        qd1_t = qd1 + qdd1 * tau
        dq2 = 0.5 * qdd2 * tau * tau
        qd2 = qdd2 * tau
        qdd = qdd1 + qdd2
        qd = qd1_t + qd2

        q_true = q + dq1 + dq2
        true = (
            jacobian(chain, q_true)[:3] @ qdd
            + jacobian_dot(chain, q_true, qd)[:3] @ qd
        )
        q_high = q + dq1
        model_r = jacobian(chain, q_high)[:3] @ qdd
        model_r = model_r + jacobian_dot(chain, q_high, qd1_t)[:3] @ qd
        model_f = jacobian(chain, q)[:3] @ qdd + jacobian_dot(chain, q, qd1)[:3] @ qd

        frozen[k] = np.linalg.norm(true - model_f)
        relin[k] = np.linalg.norm(true - model_r)
        n_dq1 = np.linalg.norm(dq1)
        rhs[k] = n_dq1 * np.linalg.norm(qdd1 + qdd2) + n_dq1 * np.linalg.norm(qd1_t)
    return frozen, relin, rhs


def run_acceleration_experiment(
    chain: ChainModel,
    samples: int = 1000,
    seed: int = 0,
    seeds: int = 3,
    horizon_time: float = 0.1,
) -> AccelerationReport:
    """
    Fit the acceleration-error constant C on the first seed, hold it fixed.

    C is twice the largest error / (|dq1||qdd1| + |dq1||qd1|) ratio seen on
    ``seed``; the remaining seeds count bound violations against that C.
    """
    seed_list = tuple(seed + i for i in range(seeds))
    frozen_all, relin_all = [], []
    constant = 0.0
    violations = 0
    for s in seed_list:
        frozen, relin, rhs = _acceleration_samples(chain, samples, s, horizon_time)
        if s == seed:
            constant = 2.0 * float(np.max(relin / np.maximum(rhs, 1e-300)))
        violations += int(np.sum(relin > constant * rhs))
        frozen_all.append(frozen)
        relin_all.append(relin)
    frozen = np.concatenate(frozen_all)
    relin = np.concatenate(relin_all)
    return AccelerationReport(
        frozen_errors=frozen,
        relinearized_errors=relin,
        bound_constant=constant,
        seeds=seed_list,
        violations=violations,
        win_rate=float(np.mean(relin < frozen)),
    )


def run_order_experiment(
    chain: ChainModel,
    trials: int = 200,
    step_sizes: Sequence[float] = (0.04, 0.02, 0.01, 0.005),
    horizon: int = 10,
    seed: int = 0,
    acceleration_samples: Optional[int] = 1000,
) -> OrderExperimentReport:
    """
    Prediction error against per-step joint increment size.

    Each trial draws a configuration, an initial joint velocity, a
    high-level acceleration and a deviation from it. For a step size s the
    control period is s / |qd0|, so one cycle moves the joints by about s.

    Raises:
        ValueError: For fewer than 3 step sizes or 50 trials.
    """
    steps = np.array(sorted(set(float(s) for s in step_sizes), reverse=True))
    if steps.size < 3 or trials < 50:
        raise ValueError("order experiment needs >= 3 step sizes and >= 50 trials")
    if np.any(steps <= 0.0):
        raise ValueError("step sizes must be positive")

    rng = np.random.default_rng(seed)
    n = chain.n_joints
    qd_scale = float(np.min(chain.qd_max))
    qdd_scale = float(np.min(chain.qdd_max))
    frozen = np.zeros((trials, steps.size))
    relin = np.zeros((trials, steps.size))
    squared = np.zeros((trials, steps.size))
    for t in range(trials):
        q0 = _random_q(rng, chain)
        qd0 = _unit(rng, n) * rng.uniform(0.5, 1.0) * qd_scale
        qdd_high = _unit(rng, n) * rng.uniform(0.5, 1.0) * qdd_scale
        deviation = _unit(rng, n) * rng.uniform(0.5, 1.5) * qdd_scale
        for c, s in enumerate(steps):
            dt = s / float(np.linalg.norm(qd0))
            frozen[t, c], relin[t, c], squared[t, c] = _velocity_trial(
                chain, q0, qd0, qdd_high, deviation, dt, horizon
            )

    notes: List[str] = []
    med_f = np.median(frozen, axis=0)
    med_r = np.median(relin, axis=0)
    remark = int(np.argmin(np.abs(steps - REMARK_STEP)))
    report = OrderExperimentReport(
        step_sizes=tuple(steps.tolist()),
        frozen_errors=frozen,
        relinearized_errors=relin,
        frozen_slope=_fit_slope(steps, med_f, "frozen", notes),
        relinearized_slope=_fit_slope(steps, med_r, "relinearized", notes),
        win_rate=float(np.mean(relin < frozen)),
        neglected_term_scale=float(np.median(squared[:, remark])),
        horizon=horizon,
        notes=notes,
    )
    if acceleration_samples:
        report.acceleration = run_acceleration_experiment(
            chain, acceleration_samples, seed, horizon_time=horizon * 0.01
        )
    for note in notes:
        logger.warning(note)
    return report


# Check suite


@dataclass
class CheckResult:
    """One pass/fail line of the verification table."""

    name: str
    value: float
    threshold: str
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    chain_name: str
    checks: List[CheckResult]
    order: Optional[OrderExperimentReport] = None
    lipschitz: Optional[LipschitzEstimate] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def richardson_ratio(
    chain: ChainModel,
    q: np.ndarray,
    h: float = 1e-2,
    jacobian_fn: JacobianFn = jacobian,
) -> float:
    """
    Error ratio of fd_jacobian at h and h/2 against the analytic Jacobian.

    Close to 4 when the analytic Jacobian is right (second-order scheme).
    """
    analytic = jacobian_fn(chain, q)
    coarse = np.max(np.abs(fd_jacobian(chain, q, h) - analytic))
    fine = np.max(np.abs(fd_jacobian(chain, q, h / 2.0) - analytic))
    return float(coarse / max(fine, 1e-300))


def kinematics_checks(
    chain: ChainModel,
    cfg: VerificationConfig,
    states: int = 100,
    jacobian_fn: JacobianFn = jacobian,
) -> List[CheckResult]:
    """Analytic J and Jdot against finite differences, plus Richardson."""
    rng = np.random.default_rng(cfg.seed)
    worst_j = worst_jd = 0.0
    ratios = []
    for k in range(states):
        q = _random_q(rng, chain, 1.0)
        qd = _unit(rng, chain.n_joints) * float(np.min(chain.qd_max))
        err_j = _relative_error(
            jacobian_fn(chain, q), fd_jacobian(chain, q, cfg.fd_step)
        )
        worst_j = max(worst_j, err_j)
        worst_jd = max(
            worst_jd,
            _relative_error(
                jacobian_dot(chain, q, qd), fd_jacobian_dot(chain, q, qd, cfg.fd_step)
            ),
        )
        if k < 10:
            ratios.append(richardson_ratio(chain, q, jacobian_fn=jacobian_fn))
    in_band = all(3.0 <= r <= 5.0 for r in ratios)
    return [
        CheckResult("jacobian_fd", worst_j, "<= 1e-6", worst_j <= 1e-6),
        CheckResult("jacobian_dot_fd", worst_jd, "<= 1e-5", worst_jd <= 1e-5),
        CheckResult(
            "richardson",
            float(np.median(ratios)),
            "ratio in [3, 5]",
            in_band,
            f"min {min(ratios):.3f}, max {max(ratios):.3f}",
        ),
    ]


def bound_check(
    chain: ChainModel, cfg: VerificationConfig, lipschitz: LipschitzEstimate
) -> CheckResult:
    """Count samples where the error term exceeds its bound."""
    rng = np.random.default_rng(cfg.seed + 1)
    violations = 0
    n = chain.n_joints
    for _ in range(cfg.bound_samples):
        q = _random_q(rng, chain, 1.0)
        dq1 = _unit(rng, n) * rng.uniform(0.0, 0.05)
        dq2 = _unit(rng, n) * rng.uniform(0.0, 0.05)
        e, bound = error_term(chain, q, dq1, dq2, lipschitz.L_H, cfg.hessian_step)
        if np.linalg.norm(e) > bound + 1e-15:
            violations += 1
    return CheckResult(
        "error_term_bound",
        float(violations),
        "0 violations",
        violations == 0,
        f"{cfg.bound_samples} samples, L_H={lipschitz.L_H:.4g}",
    )


def order_checks(report: OrderExperimentReport) -> List[CheckResult]:
    """Thresholds on the order experiment."""
    s_ref = report.step_sizes[
        int(np.argmin(np.abs(np.array(report.step_sizes) - REMARK_STEP)))
    ]
    target = s_ref * s_ref
    checks = [
        CheckResult(
            "relinearized_win_rate", report.win_rate, ">= 0.95", report.win_rate >= 0.95
        ),
        CheckResult(
            "frozen_slope",
            report.frozen_slope,
            "<= 2.2",
            bool(report.frozen_slope <= 2.2),
        ),
        CheckResult(
            "relinearized_slope",
            report.relinearized_slope,
            ">= 2.5",
            bool(report.relinearized_slope >= 2.5),
        ),
        CheckResult(
            "neglected_term_scale",
            report.neglected_term_scale,
            f"within 2x of {target:.2g}",
            0.5 * target <= report.neglected_term_scale <= 2.0 * target,
            f"step {s_ref}",
        ),
    ]
    acc = report.acceleration
    if acc is not None:
        checks += [
            CheckResult(
                "acceleration_win_rate", acc.win_rate, ">= 0.9", acc.win_rate >= 0.9
            ),
            CheckResult(
                "acceleration_bound",
                float(acc.violations),
                "0 violations",
                acc.violations == 0,
                f"C={acc.bound_constant:.4g}, seeds {list(acc.seeds)}",
            ),
        ]
    return checks


def run_verification(
    chain: ChainModel,
    cfg: Optional[VerificationConfig] = None,
    jacobian_fn: Optional[JacobianFn] = None,
) -> VerificationReport:
    """
    The full oracle suite for one chain.

    Args:
        chain: Chain to verify.
        cfg: Sample sizes and steps; defaults to the global configuration.
        jacobian_fn: Replaces the analytic Jacobian in the finite-difference
            checks (negative controls).
    """
    cfg = cfg or get_config().verification
    jacobian_fn = jacobian_fn or jacobian
    logger.info(f"Verifying {chain.name}: {cfg.trials} trials, steps {cfg.step_sizes}")

    checks = kinematics_checks(chain, cfg, jacobian_fn=jacobian_fn)
    lipschitz = lipschitz_constants(
        chain, cfg.lipschitz_samples, cfg.seed, cfg.hessian_step
    )
    checks.append(bound_check(chain, cfg, lipschitz))
    order = run_order_experiment(
        chain,
        trials=cfg.trials,
        step_sizes=cfg.step_sizes,
        horizon=cfg.horizon,
        seed=cfg.seed,
        acceleration_samples=cfg.bound_samples,
    )
    checks += order_checks(order)

    for check in checks:
        level = logging.INFO if check.passed else logging.WARNING
        logger.log(level, f"{check.name}: {check.value:.6g} ({check.threshold})")
    return VerificationReport(chain.name, checks, order, lipschitz)
