"""
Stock Scenarios - spiral tracking and singular reach tasks per morphology.

``spiral_<A..E>`` follows a rising helix from the morphology's home
posture; ``singular_<A..E>`` starts fully extended and reaches further
outward. Scenario documents (YAML) resolve through the same entry point.
"""

import logging
import math
import os
from typing import Dict, List, Optional

import numpy as np
import yaml
from pydantic import ValidationError

from chain_model import ChainModel, forward_kinematics
from morphologies import builtin_morphologies, home_configuration
from simulator import Scenario, ScenarioError
from so3 import axis_angle, log_so3
from validation import SCENARIO_SCHEMA, validate_document

logger = logging.getLogger(__name__)

SPIRAL_RADIUS = 0.15  # m
SPIRAL_PITCH = 0.05  # m per turn
SPIRAL_TURNS = 2
SPIRAL_WAYPOINTS = 16
SPIRAL_V_MAX = 0.2
SPIRAL_A_MAX = 0.4

SINGULAR_REACH = 0.1  # m beyond full extension


def spiral_waypoints(chain: ChainModel, q_home: np.ndarray) -> List[List[float]]:
    """
    Helix waypoints starting at the end-effector position of ``q_home``.

    The helix axis is world z and its center lies ``SPIRAL_RADIUS`` from the
    start point towards the base axis.
    """
    p0, _ = forward_kinematics(chain, q_home)
    radial = np.array([p0[0], p0[1], 0.0])
    norm = np.linalg.norm(radial)
    radial = radial / norm if norm > 1e-9 else np.array([1.0, 0.0, 0.0])
    tangent = np.cross([0.0, 0.0, 1.0], radial)
    center = p0 - SPIRAL_RADIUS * radial

    points = []
    for i in range(SPIRAL_WAYPOINTS):
        theta = 2.0 * math.pi * SPIRAL_TURNS * i / (SPIRAL_WAYPOINTS - 1)
        p = (
            center
            + SPIRAL_RADIUS * (math.cos(theta) * radial + math.sin(theta) * tangent)
            + np.array([0.0, 0.0, SPIRAL_PITCH * theta / (2.0 * math.pi)])
        )
        points.append(p.tolist())
    points[0] = p0.tolist()
    return points


def spiral_scenario(
    morphology: str, controller: str = "hmpc", chain: Optional[ChainModel] = None
) -> Scenario:
    """
    The stock spiral task, starting at the home end-effector position.

    The helix is not centred on the workspace: its first waypoint is the
    pose of ``home_configuration`` so the reference starts on the robot, and
    its axis lies ``SPIRAL_RADIUS`` towards the base. The goal orientation is
    the start one turned 90° about z.
    """
    chain = chain or builtin_morphologies()[morphology]
    q_home = home_configuration(chain)
    _, R_in = forward_kinematics(chain, q_home)
    R_goal = axis_angle(np.array([0.0, 0.0, 1.0]), math.pi / 2) @ R_in
    return Scenario(
        name=f"spiral_{morphology}",
        chain=morphology,
        initial_q=q_home.tolist(),
        waypoints=spiral_waypoints(chain, q_home),
        orientation_goal=log_so3(R_goal).tolist(),
        controller=controller,
        v_max=SPIRAL_V_MAX,
        a_max=SPIRAL_A_MAX,
    )


def singular_scenario(
    morphology: str, controller: str = "hmpc", chain: Optional[ChainModel] = None
) -> Scenario:
    """Start at q = 0 (fully extended) and reach beyond the workspace boundary."""
    chain = chain or builtin_morphologies()[morphology]
    q0 = np.zeros(chain.n_joints)
    p0, R0 = forward_kinematics(chain, q0)
    outward = R0[:, 2]
    target = p0 + SINGULAR_REACH * outward
    return Scenario(
        name=f"singular_{morphology}",
        chain=morphology,
        initial_q=q0.tolist(),
        waypoints=[target.tolist()],
        controller=controller,
    )


def stock_scenarios(controller: str = "hmpc") -> Dict[str, Scenario]:
    """All stock scenarios keyed by name."""
    scenarios = {}
    for morphology, chain in builtin_morphologies().items():
        for factory in (spiral_scenario, singular_scenario):
            sc = factory(morphology, controller, chain)
            scenarios[sc.name] = sc
    return scenarios


def load_scenario(text: str) -> Scenario:
    """
    Parse a YAML scenario document.

    Raises:
        ScenarioError: With every schema or model error found.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ScenarioError(f"{where}{getattr(e, 'problem', None) or e}")
    if not isinstance(doc, dict):
        raise ScenarioError("(root): scenario document must be a mapping")
    is_valid, error = validate_document(doc, SCENARIO_SCHEMA)
    if not is_valid:
        raise ScenarioError(error)
    try:
        return Scenario(**doc)
    except ValidationError as e:
        messages = [
            f"{'.'.join(str(p) for p in err['loc']) or '(root)'}: {err['msg']}"
            for err in e.errors()
        ]
        raise ScenarioError("; ".join(messages))


def resolve_scenario(ref: str, controller: Optional[str] = None) -> Scenario:
    """
    Resolve a stock scenario name or a scenario file path.

    Args:
        ref: ``spiral_<A..E>``, ``singular_<A..E>`` or a YAML file path.
        controller: Overrides the scenario's controller when given.

    Raises:
        ScenarioError: If the reference is unknown, missing or invalid.
    """
    prefix, _, morphology = ref.partition("_")
    factories = {"spiral": spiral_scenario, "singular": singular_scenario}
    if prefix in factories and morphology in builtin_morphologies():
        sc = factories[prefix](morphology)
    elif os.path.isfile(ref):
        with open(ref) as f:
            sc = load_scenario(f.read())
    else:
        raise ScenarioError(f"scenario '{ref}' is neither a stock name nor a file")
    if controller is not None:
        sc = Scenario(**{**sc.model_dump(), "controller": controller})
    logger.debug(f"Resolved scenario {sc.name} ({sc.controller})")
    return sc
