"""
Configuration module for the H-MPC toolkit.

Loads configuration from HMPC_* environment variables. Every section has
sensible defaults so the library works with an empty environment; the CLI
layers per-run overrides on top of these values.
"""

import os
from dataclasses import dataclass, field
from typing import Optional, Tuple


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}")


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


def _env_floats(name: str, default: Tuple[float, ...]) -> Tuple[float, ...]:
    raw = os.getenv(name)
    if not raw:
        return default
    try:
        return tuple(float(p) for p in raw.split(",") if p.strip())
    except ValueError:
        raise ValueError(f"{name} must be a comma-separated list of numbers")


@dataclass
class SolverConfig:
    """Dense active-set QP solver settings."""

    max_iter: int = 200
    tolerance: float = 1e-10
    feasibility_tol: float = 1e-9
    kkt_tol: float = 1e-8

    @classmethod
    def from_env(cls) -> "SolverConfig":
        """Load from environment variables."""
        return cls(
            max_iter=_env_int("HMPC_QP_MAX_ITER", 200),
            tolerance=_env_float("HMPC_QP_TOLERANCE", 1e-10),
            feasibility_tol=_env_float("HMPC_QP_FEASIBILITY_TOL", 1e-9),
            kkt_tol=_env_float("HMPC_QP_KKT_TOL", 1e-8),
        )


@dataclass
class ControllerDefaults:
    """Default horizons and cost weights shared by all controllers."""

    horizon: int = 10
    horizon_high: int = 10
    horizon_low: int = 10
    dt: float = 0.01  # seconds, 100 Hz cycle

    q_position: float = 1e3
    q_orientation: float = 1e2
    q_velocity: float = 1.0
    r_input: float = 1e-2

    # weighted-MPC baseline: secondary task gain = primary gain * ratio
    secondary_ratio: float = 1e-2
    coupling_penalty: float = 1e6
    max_held_cycles: int = 10

    priority: Tuple[int, ...] = (1, 1, 1, 0, 0, 0)

    @classmethod
    def from_env(cls) -> "ControllerDefaults":
        """Load from environment variables."""
        priority = tuple(
            int(p) for p in _env_floats("HMPC_PRIORITY", (1, 1, 1, 0, 0, 0))
        )
        return cls(
            horizon=_env_int("HMPC_HORIZON", 10),
            horizon_high=_env_int("HMPC_HORIZON_HIGH", 10),
            horizon_low=_env_int("HMPC_HORIZON_LOW", 10),
            dt=_env_float("HMPC_DT", 0.01),
            q_position=_env_float("HMPC_Q_POSITION", 1e3),
            q_orientation=_env_float("HMPC_Q_ORIENTATION", 1e2),
            q_velocity=_env_float("HMPC_Q_VELOCITY", 1.0),
            r_input=_env_float("HMPC_R_INPUT", 1e-2),
            secondary_ratio=_env_float("HMPC_SECONDARY_RATIO", 1e-2),
            coupling_penalty=_env_float("HMPC_COUPLING_PENALTY", 1e6),
            max_held_cycles=_env_int("HMPC_MAX_HELD_CYCLES", 10),
            priority=priority,
        )


@dataclass
class LimitDefaults:
    """Joint limits applied when a chain document omits them."""

    q: float = 2.75  # rad, symmetric
    qd: float = 2.0  # rad/s
    qdd: float = 0.5  # rad/s^2

    @classmethod
    def from_env(cls) -> "LimitDefaults":
        """Load from environment variables."""
        return cls(
            q=_env_float("HMPC_LIMIT_Q", 2.75),
            qd=_env_float("HMPC_LIMIT_QD", 2.0),
            qdd=_env_float("HMPC_LIMIT_QDD", 0.5),
        )


@dataclass
class SimulationConfig:
    """Closed-loop harness settings."""

    max_concurrent_runs: int = 4
    log_level: str = "INFO"
    # When False, solve_time_us is written as 0 so log.csv is reproducible
    record_timing: bool = False

    @classmethod
    def from_env(cls) -> "SimulationConfig":
        """Load from environment variables."""
        return cls(
            max_concurrent_runs=_env_int("HMPC_MAX_CONCURRENT_RUNS", 4),
            log_level=os.getenv("HMPC_LOG_LEVEL", "INFO"),
            record_timing=os.getenv("HMPC_RECORD_TIMING", "false").lower()
            == "true",
        )


@dataclass
class VerificationConfig:
    """Finite-difference steps and sample sizes for the oracle suite."""

    fd_step: float = 1e-6
    hessian_step: float = 1e-4
    lipschitz_samples: int = 10000
    bound_samples: int = 1000
    trials: int = 200
    horizon: int = 10
    step_sizes: Tuple[float, ...] = field(
        default_factory=lambda: (0.04, 0.02, 0.01, 0.005)
    )
    seed: int = 0

    @classmethod
    def from_env(cls) -> "VerificationConfig":
        """Load from environment variables."""
        return cls(
            fd_step=_env_float("HMPC_FD_STEP", 1e-6),
            hessian_step=_env_float("HMPC_HESSIAN_STEP", 1e-4),
            lipschitz_samples=_env_int("HMPC_LIPSCHITZ_SAMPLES", 10000),
            bound_samples=_env_int("HMPC_BOUND_SAMPLES", 1000),
            trials=_env_int("HMPC_VERIFY_TRIALS", 200),
            horizon=_env_int("HMPC_VERIFY_HORIZON", 10),
            step_sizes=_env_floats("HMPC_STEP_SIZES", (0.04, 0.02, 0.01, 0.005)),
            seed=_env_int("HMPC_VERIFY_SEED", 0),
        )


@dataclass
class Config:
    """Main configuration object."""

    solver: SolverConfig = field(default_factory=SolverConfig)
    controller: ControllerDefaults = field(default_factory=ControllerDefaults)
    limits: LimitDefaults = field(default_factory=LimitDefaults)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    verification: VerificationConfig = field(default_factory=VerificationConfig)

    @classmethod
    def from_env(cls) -> "Config":
        """Load all configuration from environment variables."""
        return cls(
            solver=SolverConfig.from_env(),
            controller=ControllerDefaults.from_env(),
            limits=LimitDefaults.from_env(),
            simulation=SimulationConfig.from_env(),
            verification=VerificationConfig.from_env(),
        )

    @classmethod
    def default(cls) -> "Config":
        """Return default configuration."""
        return cls(
            solver=SolverConfig(),
            controller=ControllerDefaults(),
            limits=LimitDefaults(),
            simulation=SimulationConfig(),
            verification=VerificationConfig(),
        )


# Global config instance
config: Optional[Config] = None


def load_config() -> Config:
    """Load configuration (singleton pattern)."""
    global config
    if config is None:
        config = Config.from_env()
    return config


def get_config() -> Config:
    """Get the current configuration."""
    if config is None:
        return load_config()
    return config


def reset_config() -> None:
    """Drop the cached configuration (mainly for testing)."""
    global config
    config = None
