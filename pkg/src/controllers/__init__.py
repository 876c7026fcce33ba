"""
Controllers for modular manipulators.

This package provides the weighted MPC and HQP baselines, the
hierarchical MPC, and the registry that instantiates them by name.
"""

from controllers.base import (
    ControlOutput,
    ControlStatus,
    Controller,
    ControllerWeights,
    HorizonConfig,
    JointLimits,
    JointPrediction,
)
from controllers.registry import ControllerRegistry, create_controller, get_registry

__all__ = [
    "ControlOutput",
    "ControlStatus",
    "Controller",
    "ControllerWeights",
    "HorizonConfig",
    "JointLimits",
    "JointPrediction",
    "ControllerRegistry",
    "create_controller",
    "get_registry",
]
