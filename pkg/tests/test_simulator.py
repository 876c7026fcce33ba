"""Unit tests for simulator.py - scenarios, plant and closed loop."""

import numpy as np
import pytest
from pydantic import ValidationError

from chain_model import JointState, forward_kinematics
from morphologies import home_configuration
from simulator import (
    Scenario,
    ScenarioError,
    build_scenario_reference,
    initial_state,
    integrate_joints,
    make_controller,
    run_closed_loop,
    run_many,
)
from so3 import axis_angle, log_so3
from trajectory import TrajectoryError


def _scenario_a(chain_a, **kwargs):
    """Short move of morphology A from its home posture."""
    q0 = home_configuration(chain_a)
    p0, _ = forward_kinematics(chain_a, q0)
    params = {
        "name": "short_A",
        "chain": "A",
        "initial_q": q0.tolist(),
        "waypoints": [(p0 + np.array([0.03, 0.0, 0.02])).tolist()],
        "max_cycles": 5,
    }
    params.update(kwargs)
    return Scenario(**params)


class TestIntegrateJoints:
    """Tests for the kinematic plant."""

    def test_step(self):
        """Test that the commanded velocity, not the incoming one, is integrated."""
        q, qd = integrate_joints(
            np.zeros(2), np.array([5.0, 5.0]), np.array([1.0, 2.0, 0.5, 0.5]), 0.1
        )
        assert np.allclose(q, [0.1025, 0.2025])
        assert np.allclose(qd, [1.05, 2.05])


class TestScenario:
    """Tests for the Scenario model."""

    def test_defaults(self):
        """Test default timing and controller."""
        sc = Scenario(chain="A", waypoints=[[0.0, 0.0, 0.5]])
        assert sc.controller == "hmpc"
        assert sc.dt == 0.01
        assert sc.start_from_current is True

    def test_weighted_mpc_alias(self):
        """Test that weighted_mpc normalizes to mpc."""
        sc = Scenario(chain="A", waypoints=[[0, 0, 0]], controller="Weighted_MPC")
        assert sc.controller == "mpc"

    def test_unknown_controller(self):
        """Test that unknown controllers are rejected."""
        with pytest.raises(ValidationError):
            Scenario(chain="A", waypoints=[[0, 0, 0]], controller="pid")

    def test_extra_keys_forbidden(self):
        """Test that misspelled keys are rejected."""
        with pytest.raises(ValidationError):
            Scenario(chain="A", waypoints=[[0, 0, 0]], horizon=5)

    def test_bad_waypoint(self):
        """Test that waypoints need three finite coordinates."""
        with pytest.raises(ValidationError):
            Scenario(chain="A", waypoints=[[0, 0]])
        with pytest.raises(ValidationError):
            Scenario(chain="A", waypoints=[[0, 0, float("nan")]])

    def test_bad_priority(self):
        """Test the priority vector check."""
        with pytest.raises(ValidationError):
            Scenario(chain="A", waypoints=[[0, 0, 0]], weights={"priority": [1, 2]})

    def test_non_positive_dt(self):
        """Test that dt must be positive."""
        with pytest.raises(ValidationError):
            Scenario(chain="A", waypoints=[[0, 0, 0]], dt=0.0)


class TestInitialState:
    """Tests for initial_state."""

    def test_defaults_to_zero(self, chain_a):
        """Test the zero start state."""
        state = initial_state(Scenario(chain="A", waypoints=[[0, 0, 0]]), chain_a)
        assert np.allclose(state.q, 0.0) and np.allclose(state.qd, 0.0)

    def test_dimension_mismatch(self, chain_a):
        """Test that the start state must match the joint count."""
        sc = Scenario(chain="A", waypoints=[[0, 0, 0]], initial_q=[0.0, 0.0])
        with pytest.raises(ScenarioError) as exc_info:
            initial_state(sc, chain_a)
        assert "4 joints" in exc_info.value.message

    def test_outside_limits(self, chain_a):
        """Test that a start outside the position limits is rejected."""
        sc = Scenario(chain="A", waypoints=[[0, 0, 0]], initial_q=[0, 3.0, 0, 0])
        with pytest.raises(ScenarioError) as exc_info:
            initial_state(sc, chain_a)
        assert "[1]" in exc_info.value.message

    def test_velocity_limit(self, chain_a):
        """Test that a start velocity above the limits is rejected."""
        sc = Scenario(chain="A", waypoints=[[0, 0, 0]], initial_qd=[0, 0, 0, 2.5])
        with pytest.raises(ScenarioError):
            initial_state(sc, chain_a)


class TestBuildScenarioReference:
    """Tests for build_scenario_reference."""

    def test_prepends_current_position(self, chain_a, home_a):
        """Test that the reference starts at the current end-effector position."""
        sc = _scenario_a(chain_a)
        ref = build_scenario_reference(sc, chain_a, JointState.at_rest(home_a))
        p0, _ = forward_kinematics(chain_a, home_a)
        assert np.allclose(ref.p[0], p0)
        assert np.allclose(ref.p[-1], sc.waypoints[0])

    def test_without_start_from_current(self, chain_a, home_a):
        """Test that the first waypoint is used as the start when asked."""
        p0, _ = forward_kinematics(chain_a, home_a)
        first = p0 + np.array([0.0, 0.02, 0.0])
        sc = _scenario_a(
            chain_a,
            waypoints=[first.tolist(), (p0 + 0.03).tolist()],
            start_from_current=False,
        )
        ref = build_scenario_reference(sc, chain_a, JointState.at_rest(home_a))
        assert np.allclose(ref.p[0], first)

    def test_zero_length_task_holds(self, chain_a, home_a):
        """Test that a goal at the start position yields a stationary reference."""
        p0, _ = forward_kinematics(chain_a, home_a)
        sc = _scenario_a(chain_a, waypoints=[p0.tolist()], hold_time=0.5)
        ref = build_scenario_reference(sc, chain_a, JointState.at_rest(home_a))
        assert len(ref) == 51
        assert np.allclose(ref.p, p0)
        assert np.allclose(ref.pd, 0.0)

    def test_coincident_positions_with_rotation(self, chain_a, home_a):
        """Test that reorienting in place requires an intermediate waypoint."""
        p0, r0 = forward_kinematics(chain_a, home_a)
        goal = axis_angle([0.0, 0.0, 1.0], 0.5) @ r0
        sc = _scenario_a(
            chain_a, waypoints=[p0.tolist()], orientation_goal=log_so3(goal).tolist()
        )
        with pytest.raises(TrajectoryError) as exc_info:
            build_scenario_reference(sc, chain_a, JointState.at_rest(home_a))
        assert "intermediate waypoint" in exc_info.value.message


class TestMakeController:
    """Tests for make_controller."""

    def test_overrides(self):
        """Test that scenario weights and horizons reach the controller."""
        sc = Scenario(
            chain="A",
            waypoints=[[0, 0, 0]],
            controller="mpc",
            weights={"q_position": 5.0, "priority": [1, 1, 1, 1, 0, 0]},
            horizons={"N": 4},
            dt=0.02,
        )
        controller = make_controller(sc)
        assert controller.name == "mpc"
        assert controller.horizon.N == 4
        assert controller.horizon.dt == 0.02
        assert controller.defaults.q_position == 5.0
        assert controller.defaults.priority == (1, 1, 1, 1, 0, 0)


class TestRunClosedLoop:
    """Tests for run_closed_loop and run_many."""

    def test_log_shapes(self, chain_a):
        """Test per-cycle arrays of a short hierarchical run."""
        log = run_closed_loop(_scenario_a(chain_a))
        assert log.cycles == 5
        assert log.n_joints == 4
        assert log.u.shape == (5, 8)
        assert log.x.shape == (5, 13)
        assert log.x_ref.shape == (5, 13)
        assert np.allclose(log.t, np.arange(5) * 0.01)
        assert len(log.status) == 5
        assert log.controller == "hmpc"
        assert log.chain_name == "A"
        assert log.scenario["name"] == "short_A"

    def test_first_cycle_starts_on_reference(self, chain_a):
        """Test that the initial tracking error is zero."""
        log = run_closed_loop(_scenario_a(chain_a))
        assert np.allclose(log.e_p[0], 0.0, atol=1e-12)
        assert np.allclose(log.e_o[0], 0.0, atol=1e-9)

    def test_plant_follows_inputs(self, chain_a):
        """Test that logged states obey the plant update."""
        log = run_closed_loop(_scenario_a(chain_a, controller="mpc"))
        q_next, qd_next = integrate_joints(log.q[2], log.qd[2], log.u[2], 0.01)
        assert np.allclose(log.q[3], q_next)
        assert np.allclose(log.qd[3], qd_next)

    def test_deterministic(self, chain_a):
        """Test that reruns with noise and the same seed are identical."""
        sc = _scenario_a(chain_a, controller="hqp", noise_std=1e-4, seed=7)
        first = run_closed_loop(sc)
        second = run_closed_loop(sc)
        assert np.array_equal(first.q, second.q)
        assert np.array_equal(first.u, second.u)
        other = run_closed_loop(
            _scenario_a(chain_a, controller="hqp", noise_std=1e-4, seed=8)
        )
        assert not np.array_equal(first.q[1:], other.q[1:])

    def test_planar_weighted_mpc(self, planar):
        """Test a run on a chain passed in directly."""
        q0 = np.array([0.3, 0.6])
        p0, _ = forward_kinematics(planar, q0)
        sc = Scenario(
            chain="planar_2r",
            initial_q=q0.tolist(),
            waypoints=[(p0 + np.array([-0.05, 0.05, 0.0])).tolist()],
            controller="mpc",
            max_cycles=10,
        )
        log = run_closed_loop(sc, chain=planar)
        assert log.cycles == 10
        assert "zeroed" not in log.status
        assert np.all(np.abs(log.u[:, :2]) <= planar.qd_max + 1e-9)

    def test_invalid_start(self, chain_a):
        """Test that an invalid start raises before any cycle runs."""
        with pytest.raises(ScenarioError):
            run_closed_loop(_scenario_a(chain_a, initial_q=[0.0]))

    def test_run_many_keeps_order(self, chain_a):
        """Test sequential execution order."""
        scenarios = [
            _scenario_a(chain_a, name="first", max_cycles=2),
            _scenario_a(chain_a, name="second", controller="mpc", max_cycles=2),
        ]
        logs = run_many(scenarios, max_workers=1)
        assert [log.scenario["name"] for log in logs] == ["first", "second"]
        assert [log.controller for log in logs] == ["hmpc", "mpc"]
