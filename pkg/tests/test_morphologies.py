"""Unit tests for morphologies.py - builtin chains and chain documents."""

import numpy as np
import pytest

from chain_model import ChainModel, JointModule, forward_kinematics, jacobian
from config import LimitDefaults
from morphologies import (
    ChainConfigError,
    builtin_morphologies,
    chain_to_document,
    home_configuration,
    load_chain,
    resolve_chain,
    serialize_chain,
    single_joint,
    validate_chain,
)


class TestBuiltins:
    """Tests for the A-E benchmark morphologies."""

    def test_catalog(self, catalog):
        """Test names and joint counts."""
        counts = {name: chain.n_joints for name, chain in catalog.items()}
        assert counts == {"A": 4, "B": 5, "C": 5, "D": 6, "E": 6}

    def test_all_valid(self, catalog):
        """Test that every builtin satisfies the chain invariants."""
        for chain in catalog.values():
            assert validate_chain(chain) == []

    def test_limits_from_defaults(self):
        """Test that builtin limits follow the supplied defaults."""
        chain = builtin_morphologies(LimitDefaults(q=1.0, qd=0.5, qdd=0.1))["B"]
        assert np.allclose(chain.q_upper, 1.0)
        assert np.allclose(chain.qd_max, 0.5)
        assert np.allclose(chain.qdd_max, 0.1)

    def test_wrist_modules_share_origin(self, catalog):
        """Test that the last two modules of D have no offset."""
        d = catalog["D"]
        for module in d.modules[4:]:
            assert np.allclose(module.parent_transform.translation, 0.0)

    def test_home_configuration_is_regular(self, catalog):
        """Test that home postures are inside the limits and not singular."""
        for chain in catalog.values():
            q = home_configuration(chain)
            assert np.all(q >= chain.q_lower) and np.all(q <= chain.q_upper)
            assert np.linalg.matrix_rank(jacobian(chain, q)[:3], tol=1e-6) == 3

    def test_single_joint(self, one_joint):
        """Test the one-joint chain."""
        p, _ = forward_kinematics(one_joint, np.array([np.pi / 2]))
        assert np.allclose(p, [0.0, 1.0, 0.0])
        assert single_joint(2.0).tool_transform.translation[0] == 2.0


class TestValidateChain:
    """Tests for validate_chain."""

    def test_non_unit_axis(self):
        """Test that a scaled axis is reported with its module index."""
        chain = ChainModel(modules=(JointModule(axis=np.array([0.0, 0.0, 2.0])),))
        violations = validate_chain(chain)
        assert len(violations) == 1
        assert violations[0].startswith("modules[0]: axis norm 2")

    def test_reports_every_violation(self):
        """Test that all problems are listed together."""
        module = JointModule(
            axis=np.array([0.0, 0.0, 1.0]), q_limits=(1.0, -1.0), qd_limit=0.0
        )
        violations = validate_chain(ChainModel(modules=(module,)))
        assert len(violations) == 2


class TestLoadChain:
    """Tests for load_chain."""

    def test_valid_document(self, chain_yaml):
        """Test names, axes, limits and transforms."""
        chain = load_chain(chain_yaml)
        assert chain.name == "test-arm"
        assert chain.n_joints == 3
        assert np.allclose(chain.modules[1].axis, [0.0, -1.0, 0.0])
        assert chain.modules[1].q_limits == (-1.5, 1.5)
        assert chain.modules[1].qd_limit == 1.0
        assert chain.modules[0].qd_limit == 2.0
        assert np.allclose(chain.base_transform.translation, [0.0, 0.0, 0.1])
        p, _ = forward_kinematics(chain, np.zeros(3))
        assert np.allclose(p, [0.0, 0.0, 0.7])

    def test_nearly_unit_axis_normalized(self):
        """Test that axes within 1e-6 of unit length are normalized."""
        chain = load_chain("modules:\n  - axis: [0, 0, 1.0000001]\n")
        assert np.linalg.norm(chain.modules[0].axis) == pytest.approx(1.0, abs=1e-15)

    def test_non_unit_axis_rejected(self):
        """Test that a clearly non-unit axis is an error."""
        with pytest.raises(ChainConfigError) as exc_info:
            load_chain("modules:\n  - axis: [0, 0, 1.5]\n")
        assert exc_info.value.errors[0].startswith("modules.0.axis")

    def test_prismatic_rejected(self):
        """Test that only revolute joints are accepted."""
        with pytest.raises(ChainConfigError) as exc_info:
            load_chain("modules:\n  - axis: z\n    joint_type: prismatic\n")
        assert "revolute" in exc_info.value.message

    def test_all_schema_errors_reported(self):
        """Test that every structural error is listed, each with its path."""
        text = """
modules:
  - offset: [0, 0, 0.15]
  - axis: z
    limits: {qd: -1}
  - axis: z
    color: red
"""
        with pytest.raises(ChainConfigError) as exc_info:
            load_chain(text)
        errors = exc_info.value.errors
        assert len(errors) == 3
        assert errors[0].startswith("modules.0")
        assert errors[1].startswith("modules.1.limits.qd")
        assert errors[2].startswith("modules.2")

    def test_semantic_errors_collected(self):
        """Test that axis and limit problems are reported together."""
        text = """
modules:
  - axis: [0, 0, 3]
  - axis: y
    limits: {q: [1.0, -1.0]}
"""
        with pytest.raises(ChainConfigError) as exc_info:
            load_chain(text)
        assert len(exc_info.value.errors) == 2

    def test_yaml_syntax_error(self):
        """Test that YAML errors carry line and column."""
        with pytest.raises(ChainConfigError) as exc_info:
            load_chain("modules:\n  - axis: [0, 0, 1\n")
        assert exc_info.value.errors[0].startswith("line ")
        assert "column" in exc_info.value.errors[0]

    def test_non_mapping_document(self):
        """Test that a list at the root is rejected."""
        with pytest.raises(ChainConfigError) as exc_info:
            load_chain("- axis: z\n")
        assert exc_info.value.errors == ["(root): document must be a mapping"]

    def test_serialized_chain_reloads(self, chain_e, rng):
        """Test that a serialized chain has the same kinematics."""
        reloaded = load_chain(serialize_chain(chain_e))
        assert reloaded.name == "E"
        q = rng.uniform(-2.0, 2.0, 6)
        p1, r1 = forward_kinematics(chain_e, q)
        p2, r2 = forward_kinematics(reloaded, q)
        assert np.allclose(p1, p2)
        assert np.allclose(r1, r2)


class TestResolveChain:
    """Tests for resolve_chain."""

    def test_builtin_name(self):
        """Test lookup by morphology name."""
        assert resolve_chain("C").name == "C"

    def test_planar_aliases(self):
        """Test the planar 2R names."""
        assert resolve_chain("planar_2r").n_joints == 2
        assert resolve_chain("2r").name == "planar_2r"

    def test_file_path(self, tmp_path, chain_yaml):
        """Test loading from a YAML file."""
        path = tmp_path / "arm.yaml"
        path.write_text(chain_yaml)
        assert resolve_chain(str(path)).name == "test-arm"

    def test_document(self, chain_a):
        """Test resolving an inline document."""
        assert resolve_chain(chain_to_document(chain_a)).n_joints == 4

    def test_passthrough(self, chain_a):
        """Test that a ChainModel is returned unchanged."""
        assert resolve_chain(chain_a) is chain_a

    def test_unknown(self):
        """Test that an unknown reference raises."""
        with pytest.raises(ChainConfigError) as exc_info:
            resolve_chain("no-such-arm")
        assert "no-such-arm" in exc_info.value.message
