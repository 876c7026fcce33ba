"""
QP Solver - dense convex quadratic programs.

Solves

    minimize    0.5 x^T H x + g^T x + constant
    subject to  lb  <= x   <= ub
                lbA <= A x <= ubA

with a primal active-set method in range-space form. H is factored once;
every working-set change only refactors the small Schur complement
C_W H^-1 C_W^T. Multipliers follow the sign convention

    H x + g + A^T lambda + mu = 0

so a multiplier is non-positive on an active lower bound and
non-negative on an active upper bound.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, qr
from scipy.optimize import linprog, lsq_linear

from config import SolverConfig, get_config

logger = logging.getLogger(__name__)

PSD_TOL = 1e-8
REGULARIZATION = 1e-9
SYMMETRY_TOL = 1e-10
ACTIVE_TOL = 1e-7


class QPError(ValueError):
    """Raised for malformed QP problems (dimensions, asymmetric or non-PSD H)."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class QPStatus(Enum):
    """Outcome of a QP solve."""

    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"
    INACCURATE = "inaccurate"


@dataclass(eq=False)
class QPProblem:
    """Dense QP; ``constant`` only shifts the reported objective."""

    H: np.ndarray
    g: np.ndarray
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    lbA: Optional[np.ndarray] = None
    ubA: Optional[np.ndarray] = None
    constant: float = 0.0

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        n = self.g.shape[0]
        self.lb = np.full(n, -np.inf) if self.lb is None else _vec(self.lb)
        self.ub = np.full(n, np.inf) if self.ub is None else _vec(self.ub)
        if self.A is None:
            self.A = np.zeros((0, n))
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if n else self.A
        m = self.A.shape[0]
        self.lbA = np.full(m, -np.inf) if self.lbA is None else _vec(self.lbA)
        self.ubA = np.full(m, np.inf) if self.ubA is None else _vec(self.ubA)
        self.validate()

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def validate(self) -> None:
        """
        Check dimensions, symmetry and finiteness.

        Raises:
            QPError: If the problem is malformed.
        """
        n, m = self.n, self.m
        if self.H.shape != (n, n):
            raise QPError(f"H has shape {self.H.shape}, expected ({n}, {n})")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise QPError("lb and ub must have length n")
        if self.A.shape != (m, n):
            raise QPError(f"A has shape {self.A.shape}, expected ({m}, {n})")
        if self.lbA.shape != (m,) or self.ubA.shape != (m,):
            raise QPError("lbA and ubA must have one entry per row of A")
        for label, arr in (("H", self.H), ("g", self.g), ("A", self.A)):
            if not np.all(np.isfinite(arr)):
                raise QPError(f"{label} contains non-finite entries")
        if n and np.max(np.abs(self.H - self.H.T)) > SYMMETRY_TOL:
            raise QPError("H is not symmetric")

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x + self.constant)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest bound or constraint violation at ``x`` (0 when feasible)."""
        viol = [0.0]
        if self.n:
            viol.append(np.max(self.lb - x))
            viol.append(np.max(x - self.ub))
        if self.m:
            ax = self.A @ x
            viol.append(np.max(self.lbA - ax))
            viol.append(np.max(ax - self.ubA))
        return float(max(viol))


@dataclass(eq=False)
class QPSolution:
    x: np.ndarray
    status: QPStatus
    iterations: int = 0
    objective: float = 0.0
    solve_time: float = 0.0
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ok(self) -> bool:
        return self.status == QPStatus.OPTIMAL


def _vec(v) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(-1)


class QPSolver:
    """
    Primal active-set solver holding one problem's workspace at a time.

    One solve at a time per instance; separate instances are independent.
    """

    def __init__(self, config: Optional[SolverConfig] = None):
        self.config = config or get_config().solver
        self.last_iterations = 0
        self._chol = None
        self._rows: Optional[np.ndarray] = None
        self._lo: Optional[np.ndarray] = None
        self._hi: Optional[np.ndarray] = None

    # Setup

    def _factor(self, H: np.ndarray):
        try:
            return cho_factor(H, lower=True, check_finite=False)
        except LinAlgError:
            eigmin = float(np.linalg.eigvalsh(H).min())
            if eigmin < -PSD_TOL:
                raise QPError(
                    f"H is not positive semi-definite (min eigenvalue {eigmin:.3e})"
                )
            shift = REGULARIZATION + max(0.0, -eigmin)
            logger.debug(f"Regularizing singular Hessian with {shift:.1e}*I")
            return cho_factor(
                H + shift * np.eye(H.shape[0]), lower=True, check_finite=False
            )

    def _stack_constraints(self, p: QPProblem) -> None:
        """Rows [I; A] with finite sides only."""
        n = p.n
        rows = np.vstack([np.eye(n), p.A])
        lo = np.concatenate([p.lb, p.lbA])
        hi = np.concatenate([p.ub, p.ubA])
        keep = np.isfinite(lo) | np.isfinite(hi)
        self._rows, self._lo, self._hi = rows[keep], lo[keep], hi[keep]

    def _feasible(self, x: np.ndarray) -> bool:
        cx = self._rows @ x
        tol = self.config.feasibility_tol * (1.0 + np.abs(cx))
        return bool(np.all(cx >= self._lo - tol) and np.all(cx <= self._hi + tol))

    def _independent_equalities(self, eq_idx: np.ndarray) -> List[int]:
        if eq_idx.size == 0:
            return []
        mat = self._rows[eq_idx]
        _, r, piv = qr(mat.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        if diag.size == 0 or diag[0] == 0.0:
            return []
        rank = int(np.sum(diag > 1e-10 * diag[0]))
        return sorted(int(eq_idx[i]) for i in piv[:rank])

    def _phase_one(self, p: QPProblem) -> Optional[np.ndarray]:
        """Find any feasible point with an LP, or None if there is none."""
        n = p.n
        eq = np.isfinite(p.lbA) & (p.lbA == p.ubA)
        ub_rows, ub_rhs = [], []
        for i in np.flatnonzero(~eq):
            if np.isfinite(p.ubA[i]):
                ub_rows.append(p.A[i])
                ub_rhs.append(p.ubA[i])
            if np.isfinite(p.lbA[i]):
                ub_rows.append(-p.A[i])
                ub_rhs.append(-p.lbA[i])
        bounds = [
            (None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
            for lo, hi in zip(p.lb, p.ub)
        ]
        res = linprog(
            np.zeros(n),
            A_ub=np.array(ub_rows) if ub_rows else None,
            b_ub=np.array(ub_rhs) if ub_rhs else None,
            A_eq=p.A[eq] if eq.any() else None,
            b_eq=p.lbA[eq] if eq.any() else None,
            bounds=bounds,
            method="highs",
            options={"primal_feasibility_tolerance": 1e-10},
        )
        if res.status != 0:
            return None
        return np.clip(res.x, p.lb, p.ub)

    # Solve

    def solve(
        self, p: QPProblem, warm_start: Optional[np.ndarray] = None
    ) -> QPSolution:
        """
        Solve ``p``, starting from ``warm_start`` when it is feasible.

        Returns:
            QPSolution with status optimal, max_iter (x is the last feasible
            iterate) or infeasible (x is zero).

        Raises:
            QPError: If the problem is malformed or H is not PSD.
        """
        started = time.perf_counter()
        p.validate()
        n = p.n
        if np.any(p.lb > p.ub) or np.any(p.lbA > p.ubA):
            logger.debug("QP bounds contradict each other")
            return self._finish(p, np.zeros(n), QPStatus.INFEASIBLE, 0, started)
        if n == 0:
            return self._finish(p, np.zeros(0), QPStatus.OPTIMAL, 0, started)

        self._chol = self._factor(p.H)
        self._stack_constraints(p)
        rows, lo, hi = self._rows, self._lo, self._hi
        y = cho_solve(self._chol, rows.T, check_finite=False)
        x_unc = -cho_solve(self._chol, p.g, check_finite=False)

        if self._feasible(x_unc):
            return self._certify(
                p, self._finish(p, x_unc, QPStatus.OPTIMAL, 0, started)
            )

        x = None
        if warm_start is not None:
            candidate = _vec(warm_start)
            if candidate.shape == (n,):
                candidate = np.clip(candidate, p.lb, p.ub)
                if self._feasible(candidate):
                    x = candidate
        if x is None:
            candidate = np.clip(np.zeros(n), p.lb, p.ub)
            if self._feasible(candidate):
                x = candidate
        if x is None:
            x = self._phase_one(p)
            if x is None or not self._feasible(x):
                logger.debug("QP has no feasible point")
                return self._finish(p, np.zeros(n), QPStatus.INFEASIBLE, 0, started)

        equalities = np.flatnonzero(lo == hi)
        working = self._independent_equalities(equalities)
        sides = {i: 0 for i in working}  # 0 equality, +1 lower, -1 upper
        tol = self.config.tolerance

        for iteration in range(1, self.config.max_iter + 1):
            x_w, nu = self._equality_qp(working, sides, x_unc, y)
            step = x_w - x

            alpha, block, block_side = self._ratio_test(x, step, working)
            if block is not None:
                x = x + alpha * step
                working.append(block)
                working.sort()
                sides[block] = block_side
                continue

            x = x_w
            scale = max(1.0, float(np.max(np.abs(nu), initial=0.0)))
            worst, worst_value = None, -tol * scale
            for k, idx in enumerate(working):
                side = sides[idx]
                if side == 0:
                    continue
                signed = side * nu[k]
                if signed < worst_value:
                    worst, worst_value = idx, signed
            if worst is None:
                self.last_iterations = iteration
                return self._certify(
                    p,
                    self._finish(
                        p, x, QPStatus.OPTIMAL, iteration, started, working, sides, nu
                    ),
                )
            working.remove(worst)
            del sides[worst]

        logger.warning(f"QP reached max_iter={self.config.max_iter}")
        self.last_iterations = self.config.max_iter
        return self._finish(p, x, QPStatus.MAX_ITER, self.config.max_iter, started)

    def _equality_qp(
        self, working: List[int], sides: dict, x_unc: np.ndarray, y: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Minimizer on the working set and its multipliers nu (H x + g = C_W^T nu)."""
        if not working:
            return x_unc.copy(), np.zeros(0)
        idx = np.array(working)
        c_w = self._rows[idx]
        y_w = y[:, idx]
        b_w = np.array(
            [self._lo[i] if sides[i] >= 0 else self._hi[i] for i in working]
        )
        schur = c_w @ y_w
        rhs = b_w - c_w @ x_unc
        try:
            nu = cho_solve(cho_factor(schur, check_finite=False), rhs)
        except LinAlgError:
            nu = np.linalg.lstsq(schur, rhs, rcond=None)[0]
        return x_unc + y_w @ nu, nu

    def _ratio_test(
        self, x: np.ndarray, step: np.ndarray, working: List[int]
    ) -> Tuple[float, Optional[int], int]:
        step_norm = float(np.max(np.abs(step), initial=0.0))
        if step_norm <= self.config.tolerance * (1.0 + np.max(np.abs(x))):
            return 1.0, None, 0
        cx = self._rows @ x
        cp = self._rows @ step
        scale = 1e-12 * np.sum(np.abs(self._rows), axis=1) * step_norm
        alphas = np.full(cp.shape, np.inf)
        sides = np.zeros(cp.shape, dtype=int)
        down = (cp < -scale) & np.isfinite(self._lo)
        up = (cp > scale) & np.isfinite(self._hi)
        alphas[down] = (self._lo[down] - cx[down]) / cp[down]
        sides[down] = 1
        alphas[up] = (self._hi[up] - cx[up]) / cp[up]
        sides[up] = -1
        if working:
            alphas[np.array(working)] = np.inf
        block = int(np.argmin(alphas))
        alpha = float(alphas[block])
        if alpha >= 1.0:
            return 1.0, None, 0
        return max(alpha, 0.0), block, int(sides[block])

    def _certify(self, p: QPProblem, sol: QPSolution) -> QPSolution:
        """Downgrade an optimal result whose own multipliers miss kkt_tol."""
        residual = stationarity_residual(p, sol)
        scale = 1.0 + max(
            float(np.max(np.abs(p.g), initial=0.0)),
            float(np.max(np.abs(p.H), initial=0.0))
            * float(np.max(np.abs(sol.x), initial=0.0)),
        )
        if residual > self.config.kkt_tol * scale:
            logger.warning(
                f"QP stationarity {residual:.3e} exceeds kkt_tol "
                f"{self.config.kkt_tol:.1e} (scale {scale:.3g})"
            )
            sol.status = QPStatus.INACCURATE
        return sol

    def _finish(
        self,
        p: QPProblem,
        x: np.ndarray,
        status: QPStatus,
        iterations: int,
        started: float,
        working: Optional[List[int]] = None,
        sides: Optional[dict] = None,
        nu: Optional[np.ndarray] = None,
    ) -> QPSolution:
        lam = np.zeros(p.m)
        mu = np.zeros(p.n)
        if working and nu is not None:
            full = np.zeros(p.n + p.m)
            keep = np.flatnonzero(
                np.isfinite(np.concatenate([p.lb, p.lbA]))
                | np.isfinite(np.concatenate([p.ub, p.ubA]))
            )
            for k, idx in enumerate(working):
                full[keep[idx]] = -nu[k]
            mu, lam = full[: p.n], full[p.n:]
        return QPSolution(
            x=x,
            status=status,
            iterations=iterations,
            objective=p.objective(x),
            solve_time=time.perf_counter() - started,
            lam=lam,
            mu=mu,
        )


def solve_qp(
    p: QPProblem,
    warm_start: Optional[np.ndarray] = None,
    config: Optional[SolverConfig] = None,
) -> QPSolution:
    """Solve ``p`` with a fresh solver instance."""
    return QPSolver(config).solve(p, warm_start)


def stationarity_residual(p: QPProblem, sol: QPSolution) -> float:
    """max |H x + g + A^T lam + mu| with the solver's own multipliers."""
    if p.n == 0:
        return 0.0
    lam = sol.lam if sol.lam.shape == (p.m,) else np.zeros(p.m)
    mu = sol.mu if sol.mu.shape == (p.n,) else np.zeros(p.n)
    grad = p.H @ sol.x + p.g + p.A.T @ lam + mu
    return float(np.max(np.abs(grad)))


def kkt_residuals(p: QPProblem, sol: QPSolution) -> Tuple[float, float, float]:
    """
    Stationarity, primal feasibility and complementarity residuals.

    Multipliers are recovered by sign-constrained least squares on the
    constraints active at ``sol.x``; the solver's own multipliers are not
    used.
    """
    x = _vec(sol.x)
    if x.shape != (p.n,):
        raise QPError(f"solution has length {x.shape[0]}, problem has {p.n}")
    grad = p.H @ x + p.g
    primal = p.max_violation(x)

    rows = np.vstack([np.eye(p.n), p.A])
    lo = np.concatenate([p.lb, p.lbA])
    hi = np.concatenate([p.ub, p.ubA])
    cx = rows @ x
    at_lo = np.isfinite(lo) & (np.abs(cx - lo) <= ACTIVE_TOL * (1.0 + np.abs(lo)))
    at_hi = np.isfinite(hi) & (np.abs(cx - hi) <= ACTIVE_TOL * (1.0 + np.abs(hi)))
    active = np.flatnonzero(at_lo | at_hi)
    if active.size == 0:
        return float(np.max(np.abs(grad), initial=0.0)), primal, 0.0

    only_lo = at_lo[active] & ~at_hi[active]
    only_hi = at_hi[active] & ~at_lo[active]
    lower = np.where(only_hi, 0.0, -np.inf)
    upper = np.where(only_lo, 0.0, np.inf)
    fit = lsq_linear(
        rows[active].T, -grad, bounds=(lower, upper), method="bvls", tol=1e-14
    )
    mult = fit.x
    stationarity = float(np.max(np.abs(grad + rows[active].T @ mult)))
    slack = np.where(at_lo[active], cx[active] - lo[active], cx[active] - hi[active])
    complementarity = float(np.max(np.abs(mult * slack)))
    return stationarity, primal, complementarity
