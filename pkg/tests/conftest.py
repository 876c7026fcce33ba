"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from config import reset_config
from controllers.registry import reset_registry
from morphologies import (
    builtin_morphologies,
    home_configuration,
    planar_2r,
    single_joint,
)


@pytest.fixture(autouse=True)
def fresh_globals():
    """Drop cached configuration and registry between tests."""
    reset_config()
    reset_registry()
    yield
    reset_config()
    reset_registry()


@pytest.fixture
def planar():
    """Planar 2R arm with unit links."""
    return planar_2r()


@pytest.fixture
def one_joint():
    """Single revolute joint with a unit link."""
    return single_joint()


@pytest.fixture
def catalog():
    """The builtin morphologies A-E."""
    return builtin_morphologies()


@pytest.fixture
def chain_a(catalog):
    """Morphology A (4 DoF), the smallest chain the hierarchical MPC accepts."""
    return catalog["A"]


@pytest.fixture
def chain_e(catalog):
    """Morphology E (6 DoF)."""
    return catalog["E"]


@pytest.fixture
def home_a(chain_a):
    """Bent home posture of morphology A."""
    return home_configuration(chain_a)


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def chain_yaml():
    """A valid three-module chain document."""
    return """
name: test-arm
base:
  translation: [0, 0, 0.1]
tool:
  translation: [0, 0, 0.15]
modules:
  - axis: z
    offset: [0, 0, 0.15]
  - axis: -y
    offset: [0, 0, 0.15]
    limits: {q: [-1.5, 1.5], qd: 1.0, qdd: 0.4}
  - axis: [0, 1, 0]
    offset: [0, 0, 0.15]
"""
