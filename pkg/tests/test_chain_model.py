"""Unit tests for chain_model.py - kinematics and mapping matrices."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chain_model import (
    EndEffectorState,
    JointState,
    RigidTransform,
    build_b_e,
    build_b_kin,
    end_effector_state,
    forward_kinematics,
    jacobian,
    jacobian_dot,
    kinematic_maps,
    quat_rate_matrix,
)
from morphologies import planar_2r
from so3 import KinematicsError, align_hemisphere, axis_angle, quat_from_matrix

angles = st.floats(min_value=-2.7, max_value=2.7, allow_nan=False)


def planar_fk(q1, q2):
    return np.array(
        [math.cos(q1) + math.cos(q1 + q2), math.sin(q1) + math.sin(q1 + q2), 0.0]
    )


class TestRigidTransform:
    """Tests for RigidTransform."""

    def test_compose(self):
        """Test composition of rotation and translation."""
        a = RigidTransform(axis_angle([0, 0, 1], math.pi / 2), np.array([1.0, 0, 0]))
        b = RigidTransform.from_translation([1.0, 0.0, 0.0])
        c = a.compose(b)
        assert np.allclose(c.translation, [1.0, 1.0, 0.0])
        assert np.allclose(c.as_matrix()[:3, :3], a.rotation)

    def test_bad_shape(self):
        """Test that a malformed transform raises."""
        with pytest.raises(KinematicsError):
            RigidTransform(np.eye(2), np.zeros(3))


class TestForwardKinematics:
    """Tests for forward_kinematics."""

    @given(angles, angles)
    @settings(max_examples=40, deadline=None)
    def test_planar_closed_form(self, q1, q2):
        """Test the 2R arm against its closed form."""
        p, r = forward_kinematics(planar_2r(), np.array([q1, q2]))
        assert np.allclose(p, planar_fk(q1, q2), atol=1e-12)
        assert np.allclose(r, axis_angle([0, 0, 1], q1 + q2), atol=1e-12)

    def test_builtin_home_extends_up(self, chain_a):
        """Test that q = 0 stacks all modules along z."""
        p, r = forward_kinematics(chain_a, np.zeros(4))
        assert np.allclose(p, [0.0, 0.0, 0.75])
        assert np.allclose(r, np.eye(3))

    def test_dimension_mismatch(self, planar):
        """Test that a wrong-length q raises."""
        with pytest.raises(KinematicsError) as exc_info:
            forward_kinematics(planar, np.zeros(3))
        assert "2 joints" in str(exc_info.value)


class TestJacobian:
    """Tests for jacobian and jacobian_dot."""

    @given(angles, angles)
    @settings(max_examples=40, deadline=None)
    def test_planar_closed_form(self, q1, q2):
        """Test the 2R Jacobian against its closed form."""
        s1, c1 = math.sin(q1), math.cos(q1)
        s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
        expected = np.array(
            [
                [-s1 - s12, -s12],
                [c1 + c12, c12],
                [0.0, 0.0],
                [0.0, 0.0],
                [0.0, 0.0],
                [1.0, 1.0],
            ]
        )
        assert np.allclose(jacobian(planar_2r(), [q1, q2]), expected, atol=1e-12)

    def test_planar_jacobian_dot_closed_form(self, planar):
        """Test the 2R Jacobian derivative against its closed form."""
        q1, q2, w1, w2 = 0.4, -1.1, 0.7, -0.3
        c1, s1 = math.cos(q1), math.sin(q1)
        c12, s12 = math.cos(q1 + q2), math.sin(q1 + q2)
        w12 = w1 + w2
        expected = np.zeros((6, 2))
        expected[0] = [-c1 * w1 - c12 * w12, -c12 * w12]
        expected[1] = [-s1 * w1 - s12 * w12, -s12 * w12]
        jd = jacobian_dot(planar, [q1, q2], [w1, w2])
        assert np.allclose(jd, expected, atol=1e-12)

    def test_linear_rows_match_finite_differences(self, chain_e, rng):
        """Test J against central differences of FK on a 6-DoF chain."""
        h = 1e-6
        for _ in range(5):
            q = rng.uniform(-2.0, 2.0, 6)
            j = jacobian(chain_e, q)
            for i in range(6):
                dq = np.zeros(6)
                dq[i] = h
                p_plus, _ = forward_kinematics(chain_e, q + dq)
                p_minus, _ = forward_kinematics(chain_e, q - dq)
                assert np.allclose(j[:3, i], (p_plus - p_minus) / (2 * h), atol=1e-8)

    def test_jacobian_dot_matches_finite_differences(self, chain_e, rng):
        """Test Jdot against a directional difference of J."""
        h = 1e-6
        for _ in range(5):
            q = rng.uniform(-2.0, 2.0, 6)
            qd = rng.uniform(-1.0, 1.0, 6)
            fd = (jacobian(chain_e, q + h * qd) - jacobian(chain_e, q - h * qd)) / (
                2 * h
            )
            assert np.allclose(jacobian_dot(chain_e, q, qd), fd, atol=1e-7)


class TestQuaternionKinematics:
    """Tests for quat_rate_matrix and build_b_e."""

    def test_rate_matrix_properties(self, rng):
        """Test G^T o = 0 and G^T G = I."""
        o = quat_from_matrix(axis_angle(rng.standard_normal(3), 1.3))
        g = quat_rate_matrix(o)
        assert g.shape == (4, 3)
        assert np.allclose(g.T @ o, 0.0)
        assert np.allclose(g.T @ g, np.eye(3))

    def test_rate_matrix_rejects_non_unit(self):
        """Test that a non-unit quaternion raises."""
        with pytest.raises(KinematicsError):
            quat_rate_matrix(np.array([1.0, 0.1, 0.0, 0.0]))

    def test_quaternion_rate_matches_motion(self, chain_e, rng):
        """Test odot = 0.5 G(o) w with w the world-frame angular velocity."""
        h = 1e-6
        q = rng.uniform(-2.0, 2.0, 6)
        qd = rng.uniform(-1.0, 1.0, 6)
        o = quat_from_matrix(forward_kinematics(chain_e, q)[1])
        o_plus = align_hemisphere(
            quat_from_matrix(forward_kinematics(chain_e, q + h * qd)[1]), o
        )
        o_minus = align_hemisphere(
            quat_from_matrix(forward_kinematics(chain_e, q - h * qd)[1]), o
        )
        w = jacobian(chain_e, q)[3:] @ qd
        assert np.allclose((o_plus - o_minus) / (2 * h), 0.5 * quat_rate_matrix(o) @ w)

    def test_b_e_blocks(self):
        """Test the increment map layout."""
        o = np.array([1.0, 0.0, 0.0, 0.0])
        b = build_b_e(o, 0.01)
        assert b.shape == (13, 12)
        assert np.allclose(b[0:3, 0:3], 0.01 * np.eye(3))
        assert np.allclose(b[3:7, 3:6], 0.005 * quat_rate_matrix(o))
        assert np.allclose(b[7:10, 6:9], 0.01 * np.eye(3))
        assert np.allclose(b[10:13, 9:12], 0.01 * np.eye(3))
        assert np.count_nonzero(b[0:3, 3:]) == 0

    def test_b_e_rejects_bad_dt(self):
        """Test that dt <= 0 raises."""
        with pytest.raises(KinematicsError):
            build_b_e(np.array([1.0, 0.0, 0.0, 0.0]), 0.0)


class TestStates:
    """Tests for JointState, EndEffectorState and the stacked maps."""

    def test_joint_state_shape_mismatch(self):
        """Test that q and qd must match."""
        with pytest.raises(KinematicsError):
            JointState(np.zeros(3), np.zeros(2))

    def test_end_effector_state_canonicalizes(self):
        """Test that the quaternion is flipped to eta >= 0."""
        x = EndEffectorState(np.zeros(3), np.array([-1.0, 0.0, 0.0, 0.0]))
        assert x.o[0] == 1.0

    def test_state_vector_layout(self):
        """Test [p, o, pd, w] stacking."""
        x = EndEffectorState(
            np.array([1.0, 2.0, 3.0]),
            np.array([1.0, 0.0, 0.0, 0.0]),
            np.array([4.0, 5.0, 6.0]),
            np.array([7.0, 8.0, 9.0]),
        )
        v = x.as_vector()
        assert v.shape == (13,)
        assert np.allclose(EndEffectorState.from_vector(v).as_vector(), v)
        with pytest.raises(KinematicsError):
            EndEffectorState.from_vector(np.zeros(12))

    def test_twist_is_jacobian_times_velocity(self, chain_e, rng):
        """Test [pd; w] == J qd."""
        s = JointState(rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 6))
        x = end_effector_state(chain_e, s)
        assert np.allclose(np.concatenate([x.pd, x.w]), jacobian(chain_e, s.q) @ s.qd)

    def test_b_kin_structure(self, chain_a, rng):
        """Test [[J, 0], [Jdot, J]]."""
        s = JointState(rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4))
        b = build_b_kin(chain_a, s)
        j = jacobian(chain_a, s.q)
        assert b.shape == (12, 8)
        assert np.allclose(b[:6, :4], j)
        assert np.allclose(b[:6, 4:], 0.0)
        assert np.allclose(b[6:, :4], jacobian_dot(chain_a, s.q, s.qd))
        assert np.allclose(b[6:, 4:], j)

    def test_kinematic_maps_bundle(self, chain_a, home_a):
        """Test that kinematic_maps agrees with the individual builders."""
        s = JointState.at_rest(home_a)
        maps = kinematic_maps(chain_a, s, 0.01)
        assert np.allclose(maps.J, jacobian(chain_a, home_a))
        assert np.allclose(maps.Jdot, 0.0)
        assert maps.B_e.shape == (13, 12)
