"""Unit tests for oracles.py - finite-difference checks and order experiments."""

import numpy as np
import pytest

from chain_model import jacobian, jacobian_dot
from config import VerificationConfig
from oracles import (
    AccelerationReport,
    LipschitzEstimate,
    OrderExperimentReport,
    bound_check,
    contract,
    error_term,
    fd_hessian_tensor,
    fd_jacobian,
    fd_jacobian_dot,
    kinematics_checks,
    lipschitz_constants,
    order_checks,
    richardson_ratio,
    run_acceleration_experiment,
    run_order_experiment,
    run_verification,
    tensor_norm,
)

SMALL = VerificationConfig(lipschitz_samples=20, bound_samples=20, trials=50, horizon=6)


def _corrupted(chain, q):
    return 1.01 * jacobian(chain, q)


class TestFiniteDifferences:
    """Tests for the finite-difference tensors."""

    def test_fd_jacobian(self, chain_e, rng):
        """Test agreement with the analytic Jacobian."""
        for _ in range(5):
            q = rng.uniform(-2.0, 2.0, 6)
            assert np.allclose(fd_jacobian(chain_e, q), jacobian(chain_e, q), atol=1e-7)

    def test_fd_jacobian_step(self, planar):
        """Test that a non-positive step raises."""
        with pytest.raises(ValueError):
            fd_jacobian(planar, np.zeros(2), h=0.0)

    def test_fd_jacobian_dot(self, chain_e, rng):
        """Test agreement with the analytic derivative."""
        q = rng.uniform(-2.0, 2.0, 6)
        qd = rng.uniform(-1.0, 1.0, 6)
        assert np.allclose(
            fd_jacobian_dot(chain_e, q, qd), jacobian_dot(chain_e, q, qd), atol=1e-6
        )

    def test_hessian_tensor(self, chain_e, rng):
        """Test position-row symmetry and the contraction with qd."""
        q = rng.uniform(-2.0, 2.0, 6)
        qd = rng.uniform(-1.0, 1.0, 6)
        tensor = fd_hessian_tensor(chain_e, q)
        assert tensor.shape == (6, 6, 6)
        assert np.allclose(tensor[:3], np.transpose(tensor[:3], (0, 2, 1)), atol=1e-6)
        jd_qd = jacobian_dot(chain_e, q, qd) @ qd
        assert np.allclose(contract(tensor, qd, qd), jd_qd, atol=1e-6)

    def test_tensor_norm(self):
        """Test the norm on diagonal slices."""
        tensor = np.zeros((2, 2, 2))
        tensor[0] = np.diag([3.0, 1.0])
        tensor[1] = np.diag([0.0, 4.0])
        assert tensor_norm(tensor) == pytest.approx(5.0)


class TestErrorTerm:
    """Tests for error_term and lipschitz_constants."""

    def test_bound_holds(self, chain_e, rng):
        """Test that the local bound always dominates the error term."""
        for _ in range(10):
            q = rng.uniform(-2.0, 2.0, 6)
            dq1 = rng.uniform(-0.04, 0.04, 6)
            dq2 = rng.uniform(-0.04, 0.04, 6)
            e, bound = error_term(chain_e, q, dq1, dq2)
            assert e.shape == (6,)
            assert np.linalg.norm(e) <= bound

    def test_zero_steps(self, planar):
        """Test that zero increments give a zero term and bound."""
        e, bound = error_term(planar, np.array([0.3, 0.6]), np.zeros(2), np.zeros(2))
        assert np.allclose(e, 0.0)
        assert bound == 0.0

    def test_step_too_large(self, planar):
        """Test the 0.1 rad guard."""
        with pytest.raises(ValueError) as exc_info:
            error_term(planar, np.zeros(2), np.array([0.2, 0.0]), np.zeros(2))
        assert "dq1" in str(exc_info.value)

    def test_lipschitz_sets_bound(self, planar):
        """Test that the bound scales with the given constant alone."""
        q = np.array([0.3, 0.6])
        dq = np.array([0.01, 0.02])
        _, local = error_term(planar, q, dq, dq)
        _, wide = error_term(planar, q, dq, dq, lipschitz=1e3)
        _, narrow = error_term(planar, q, dq, dq, lipschitz=1e-6)
        assert wide > local > narrow
        assert narrow == pytest.approx(0.5 * 1e-6 * 3.0 * (dq @ dq))

    def test_lipschitz_constants(self, planar):
        """Test sampled constants of the planar arm."""
        est = lipschitz_constants(planar, samples=30, seed=3)
        assert est.samples == 30
        assert 0.0 < est.L_J <= 2.0 * np.sqrt(2.0) + 1e-9
        assert est.L_H > 0.0
        assert set(est.as_dict()) == {"L_H", "L_J", "L_Jdot"}


class TestOrderExperiment:
    """Tests for run_order_experiment and run_acceleration_experiment."""

    def test_argument_checks(self, planar):
        """Test the minimum number of step sizes and trials."""
        with pytest.raises(ValueError):
            run_order_experiment(planar, trials=50, step_sizes=(0.02, 0.01))
        with pytest.raises(ValueError):
            run_order_experiment(planar, trials=49)
        with pytest.raises(ValueError):
            run_order_experiment(planar, trials=50, step_sizes=(0.02, 0.01, -0.01))

    def test_relinearized_is_more_accurate(self, planar):
        """Test that re-linearizing along the rollout beats the frozen model."""
        report = run_order_experiment(planar, trials=50, acceleration_samples=None)
        assert report.trials == 50
        assert report.step_sizes == (0.04, 0.02, 0.01, 0.005)
        assert report.frozen_errors.shape == (50, 4)
        med_f, med_r = report.median_errors()
        assert np.all(med_r < med_f)
        assert report.relinearized_slope > report.frozen_slope
        assert report.neglected_term_scale > 0.0
        assert report.acceleration is None

    def test_deterministic(self, planar):
        """Test that the same seed reproduces the errors."""
        kwargs = {"trials": 50, "horizon": 4, "acceleration_samples": None}
        a = run_order_experiment(planar, **kwargs)
        b = run_order_experiment(planar, **kwargs)
        assert np.array_equal(a.relinearized_errors, b.relinearized_errors)

    def test_acceleration_experiment(self, planar):
        """Test the constant fit on the first seed and the extra seeds."""
        acc = run_acceleration_experiment(planar, samples=100, seed=5, seeds=3)
        assert acc.seeds == (5, 6, 7)
        assert acc.frozen_errors.shape == (300,)
        assert acc.bound_constant > 0.0
        assert np.median(acc.relinearized_errors) < np.median(acc.frozen_errors)


def _report(win_rate=0.99, frozen_slope=2.0, relin_slope=3.0, scale=4e-4, acc=None):
    return OrderExperimentReport(
        step_sizes=(0.04, 0.02, 0.01, 0.005),
        frozen_errors=np.ones((50, 4)),
        relinearized_errors=np.zeros((50, 4)),
        frozen_slope=frozen_slope,
        relinearized_slope=relin_slope,
        win_rate=win_rate,
        neglected_term_scale=scale,
        horizon=10,
        acceleration=acc,
    )


class TestChecks:
    """Tests for the pass/fail checks."""

    def test_order_checks_pass(self):
        """Test thresholds on a report that meets all of them."""
        checks = order_checks(_report())
        assert [c.name for c in checks] == [
            "relinearized_win_rate",
            "frozen_slope",
            "relinearized_slope",
            "neglected_term_scale",
        ]
        assert all(c.passed for c in checks)

    def test_order_checks_fail(self):
        """Test each threshold failing."""
        checks = order_checks(
            _report(win_rate=0.9, frozen_slope=2.5, relin_slope=2.1, scale=1e-2)
        )
        assert not any(c.passed for c in checks)

    def test_acceleration_checks(self):
        """Test the extra rows when the acceleration experiment ran."""
        acc = AccelerationReport(
            frozen_errors=np.ones(3),
            relinearized_errors=np.zeros(3),
            bound_constant=1.5,
            seeds=(0, 1, 2),
            violations=2,
            win_rate=1.0,
        )
        checks = {c.name: c for c in order_checks(_report(acc=acc))}
        assert checks["acceleration_win_rate"].passed
        assert not checks["acceleration_bound"].passed

    def test_richardson_ratio(self, planar):
        """Test a ratio near 4 for the analytic Jacobian."""
        ratio = richardson_ratio(planar, np.array([0.3, 0.6]))
        assert 3.0 <= ratio <= 5.0

    def test_kinematics_checks_pass(self, planar):
        """Test that the analytic Jacobian passes every kinematics check."""
        checks = kinematics_checks(planar, VerificationConfig(), states=5)
        assert [c.name for c in checks] == [
            "jacobian_fd",
            "jacobian_dot_fd",
            "richardson",
        ]
        assert all(c.passed for c in checks)

    def test_corrupted_jacobian_detected(self, planar):
        """Test that a scaled Jacobian fails the finite-difference checks."""
        checks = {
            c.name: c
            for c in kinematics_checks(
                planar, VerificationConfig(), states=5, jacobian_fn=_corrupted
            )
        }
        assert not checks["jacobian_fd"].passed
        assert not checks["richardson"].passed
        assert checks["jacobian_dot_fd"].passed

    def test_bound_check(self, planar):
        """Test zero violations with the sampled constant."""
        est = lipschitz_constants(planar, samples=200)
        result = bound_check(planar, SMALL, est)
        assert result.name == "error_term_bound"
        assert result.passed

    def test_bound_check_small_constant(self, planar):
        """Test that an underestimated L_H produces violations."""
        est = LipschitzEstimate(L_H=1e-6, L_J=1.0, L_Jdot=1.0, samples=1)
        result = bound_check(planar, SMALL, est)
        assert not result.passed
        assert result.value > 0
        assert "L_H=1e-06" in result.detail

    def test_run_verification(self, planar):
        """Test the bundled suite on a small configuration."""
        report = run_verification(planar, SMALL)
        names = [c.name for c in report.checks]
        assert names[:4] == [
            "jacobian_fd",
            "jacobian_dot_fd",
            "richardson",
            "error_term_bound",
        ]
        assert "acceleration_bound" in names
        assert report.order.trials == 50
        assert report.lipschitz.samples == 20
        assert report.passed == (report.failed() == [])

    def test_run_verification_negative_control(self, planar):
        """Test that the corrupted Jacobian makes the suite fail."""
        report = run_verification(planar, SMALL, jacobian_fn=_corrupted)
        assert not report.passed
        assert "jacobian_fd" in [c.name for c in report.failed()]
