"""Unit tests for config.py - environment-driven configuration."""

import os
from unittest.mock import patch

import pytest

from config import (
    Config,
    ControllerDefaults,
    LimitDefaults,
    SimulationConfig,
    SolverConfig,
    VerificationConfig,
    get_config,
    reset_config,
)


class TestSolverConfig:
    """Tests for SolverConfig class."""

    def test_default_values(self):
        """Test default configuration values."""
        cfg = SolverConfig()
        assert cfg.max_iter == 200
        assert cfg.tolerance == 1e-10
        assert cfg.feasibility_tol == 1e-9

    def test_from_env(self):
        """Test loading configuration from environment variables."""
        env_vars = {"HMPC_QP_MAX_ITER": "50", "HMPC_QP_TOLERANCE": "1e-8"}
        with patch.dict(os.environ, env_vars, clear=False):
            cfg = SolverConfig.from_env()
            assert cfg.max_iter == 50
            assert cfg.tolerance == 1e-8

    def test_from_env_invalid_int(self):
        """Test that a malformed integer names the variable."""
        with patch.dict(os.environ, {"HMPC_QP_MAX_ITER": "many"}, clear=True):
            with pytest.raises(ValueError) as exc_info:
                SolverConfig.from_env()
            assert "HMPC_QP_MAX_ITER" in str(exc_info.value)


class TestControllerDefaults:
    """Tests for ControllerDefaults class."""

    def test_default_values(self):
        """Test default horizons, period and gains."""
        cfg = ControllerDefaults()
        assert cfg.horizon == 10
        assert cfg.horizon_high == 10
        assert cfg.horizon_low == 10
        assert cfg.dt == 0.01
        assert cfg.priority == (1, 1, 1, 0, 0, 0)
        assert cfg.max_held_cycles == 10

    def test_from_env(self):
        """Test loading gains and priority from the environment."""
        env_vars = {
            "HMPC_HORIZON_HIGH": "15",
            "HMPC_HORIZON_LOW": "5",
            "HMPC_Q_POSITION": "500",
            "HMPC_PRIORITY": "0,0,0,1,1,1",
        }
        with patch.dict(os.environ, env_vars, clear=False):
            cfg = ControllerDefaults.from_env()
            assert cfg.horizon_high == 15
            assert cfg.horizon_low == 5
            assert cfg.q_position == 500.0
            assert cfg.priority == (0, 0, 0, 1, 1, 1)

    def test_from_env_invalid_list(self):
        """Test that a malformed list is rejected."""
        with patch.dict(os.environ, {"HMPC_PRIORITY": "1,x,1"}, clear=True):
            with pytest.raises(ValueError) as exc_info:
                ControllerDefaults.from_env()
            assert "HMPC_PRIORITY" in str(exc_info.value)


class TestLimitDefaults:
    """Tests for LimitDefaults class."""

    def test_default_values(self):
        """Test the default joint limits."""
        cfg = LimitDefaults()
        assert cfg.q == 2.75
        assert cfg.qd == 2.0
        assert cfg.qdd == 0.5

    def test_from_env(self):
        """Test loading limits from the environment."""
        with patch.dict(os.environ, {"HMPC_LIMIT_QD": "1.5"}, clear=True):
            cfg = LimitDefaults.from_env()
            assert cfg.qd == 1.5
            assert cfg.q == 2.75


class TestSimulationConfig:
    """Tests for SimulationConfig class."""

    def test_from_env_defaults(self):
        """Test that defaults are used when env vars not set."""
        with patch.dict(os.environ, {}, clear=True):
            cfg = SimulationConfig.from_env()
            assert cfg.max_concurrent_runs == 4
            assert cfg.log_level == "INFO"
            assert cfg.record_timing is False

    def test_record_timing_flag(self):
        """Test the timing switch."""
        with patch.dict(os.environ, {"HMPC_RECORD_TIMING": "TRUE"}, clear=True):
            assert SimulationConfig.from_env().record_timing is True


class TestVerificationConfig:
    """Tests for VerificationConfig class."""

    def test_default_values(self):
        """Test default sample sizes and step sizes."""
        cfg = VerificationConfig()
        assert cfg.trials == 200
        assert cfg.lipschitz_samples == 10000
        assert cfg.step_sizes == (0.04, 0.02, 0.01, 0.005)

    def test_step_sizes_from_env(self):
        """Test parsing the step-size list."""
        with patch.dict(os.environ, {"HMPC_STEP_SIZES": "0.1, 0.05,0.025"}, clear=True):
            cfg = VerificationConfig.from_env()
            assert cfg.step_sizes == (0.1, 0.05, 0.025)


class TestGlobalConfig:
    """Tests for the cached configuration."""

    def test_get_config_is_cached(self):
        """Test that get_config returns the same instance."""
        assert get_config() is get_config()

    def test_reset_config_reloads_env(self):
        """Test that reset_config picks up environment changes."""
        with patch.dict(os.environ, {"HMPC_DT": "0.02"}, clear=True):
            reset_config()
            assert get_config().controller.dt == 0.02
        reset_config()
        with patch.dict(os.environ, {}, clear=True):
            assert get_config().controller.dt == 0.01

    def test_default_matches_empty_env(self):
        """Test Config.default against an empty environment."""
        with patch.dict(os.environ, {}, clear=True):
            assert Config.from_env() == Config.default()
