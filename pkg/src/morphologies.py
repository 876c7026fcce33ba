"""
Morphology Library - builtin benchmark chains and chain documents.

Five representative modular arms (A-E, 4 to 6 DoF) built from uniform
0.15 m revolute modules, plus loading, validation and serialization of
user chain documents written in YAML:

    name: my-arm
    base: {translation: [0, 0, 0], rotation: [0, 0, 0]}
    tool: {translation: [0, 0, 0.15]}
    modules:
      - axis: z                 # or -y, or an explicit unit 3-vector
        offset: [0, 0, 0.15]    # parent frame -> module frame, meters
        pre_rotation: [0, 0, 0] # axis-angle, radians
        limits: {q: [-2.75, 2.75], qd: 2.0, qdd: 0.5}
"""

import logging
import os
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml

from chain_model import ChainModel, JointModule, RigidTransform
from config import LimitDefaults, get_config
from so3 import exp_so3, is_rotation, log_so3
from validation import CHAIN_SCHEMA, schema_errors

logger = logging.getLogger(__name__)

MODULE_LENGTH = 0.15
AXIS_NORMALIZE_TOL = 1e-6
INVARIANT_TOL = 1e-12

_NAMED_AXES = {
    "x": (1.0, 0.0, 0.0),
    "y": (0.0, 1.0, 0.0),
    "z": (0.0, 0.0, 1.0),
}

# joint axis per module, base to tool
_LAYOUTS = {
    "A": ["z", "y", "y", "y"],
    "B": ["z", "y", "y", "z", "y"],
    "C": ["z", "x", "x", "z", "x"],
    "D": ["z", "y", "y", "z", "y", "z"],
    "E": ["z", "y", "z", "y", "z", "y"],
}
# modules mounted without an offset (intersecting wrist axes)
_WRIST_MODULES = {"D": (4, 5)}

_BEND_ANGLES = (0.6, 0.9, 0.6, 0.4)


class ChainConfigError(ValueError):
    """Raised when a chain document is invalid; lists every problem found."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        self.message = "; ".join(self.errors)
        super().__init__(self.message)


def _axis_vector(name: str) -> np.ndarray:
    sign = -1.0 if name.startswith("-") else 1.0
    return sign * np.array(_NAMED_AXES[name.lstrip("+-")])


def _builtin(name: str, limits: LimitDefaults) -> ChainModel:
    modules = []
    wrist = _WRIST_MODULES.get(name, ())
    for i, axis in enumerate(_LAYOUTS[name]):
        offset = (0.0, 0.0, 0.0) if i in wrist else (0.0, 0.0, MODULE_LENGTH)
        modules.append(
            JointModule(
                axis=_axis_vector(axis),
                parent_transform=RigidTransform.from_translation(offset),
                q_limits=(-limits.q, limits.q),
                qd_limit=limits.qd,
                qdd_limit=limits.qdd,
            )
        )
    return ChainModel(
        modules=tuple(modules),
        tool_transform=RigidTransform.from_translation((0.0, 0.0, MODULE_LENGTH)),
        name=name,
    )


def builtin_morphologies(
    limits: Optional[LimitDefaults] = None,
) -> Dict[str, ChainModel]:
    """The five benchmark morphologies keyed by name (A-E)."""
    limits = limits or get_config().limits
    return {name: _builtin(name, limits) for name in _LAYOUTS}


def home_configuration(chain: ChainModel) -> np.ndarray:
    """
    A bent, non-singular starting posture.

    Joints whose axis is not the world vertical alternate through a fixed
    set of bend angles; vertical joints stay at zero.
    """
    q = np.zeros(chain.n_joints)
    bends = 0
    for i, module in enumerate(chain.modules):
        if abs(abs(module.axis[2]) - 1.0) > 1e-9:
            q[i] = _BEND_ANGLES[bends % len(_BEND_ANGLES)]
            bends += 1
    return np.clip(q, chain.q_lower, chain.q_upper)


def planar_2r(link: float = 1.0) -> ChainModel:
    """Two z-axis joints with links of length ``link`` along local x."""
    modules = (
        JointModule(axis=np.array([0.0, 0.0, 1.0])),
        JointModule(
            axis=np.array([0.0, 0.0, 1.0]),
            parent_transform=RigidTransform.from_translation((link, 0.0, 0.0)),
        ),
    )
    return ChainModel(
        modules=modules,
        tool_transform=RigidTransform.from_translation((link, 0.0, 0.0)),
        name="planar_2r",
    )


def single_joint(link: float = 1.0) -> ChainModel:
    """One z-axis joint with the tool ``link`` along local x."""
    return ChainModel(
        modules=(JointModule(axis=np.array([0.0, 0.0, 1.0])),),
        tool_transform=RigidTransform.from_translation((link, 0.0, 0.0)),
        name="single_joint",
    )


def validate_chain(chain: ChainModel) -> List[str]:
    """
    Check every ChainModel invariant.

    Returns:
        One message per violation; empty when the chain is valid.
    """
    violations = []
    if chain.n_joints < 1:
        violations.append("chain has no modules")
    for label, tf in (("base", chain.base_transform), ("tool", chain.tool_transform)):
        if not is_rotation(tf.rotation, INVARIANT_TOL):
            violations.append(f"{label}: rotation is not orthonormal with det +1")
    for i, module in enumerate(chain.modules):
        norm = float(np.linalg.norm(module.axis))
        if module.axis.shape != (3,) or abs(norm - 1.0) > INVARIANT_TOL:
            violations.append(f"modules[{i}]: axis norm {norm:.6g} is not unit")
        if not is_rotation(module.parent_transform.rotation, INVARIANT_TOL):
            violations.append(
                f"modules[{i}]: parent_transform rotation is not orthonormal "
                "with det +1"
            )
        lower, upper = module.q_limits
        if not lower < upper:
            violations.append(
                f"modules[{i}]: q_limits lower ≥ upper ({lower}, {upper})"
            )
        if not module.qd_limit > 0.0:
            violations.append(f"modules[{i}]: qd_limit must be positive")
        if not module.qdd_limit > 0.0:
            violations.append(f"modules[{i}]: qdd_limit must be positive")
    return violations


def _transform_from_doc(doc: Optional[Dict[str, Any]]) -> RigidTransform:
    doc = doc or {}
    return RigidTransform(
        exp_so3(doc.get("rotation", (0.0, 0.0, 0.0))),
        np.asarray(doc.get("translation", (0.0, 0.0, 0.0)), dtype=float),
    )


def chain_from_document(
    doc: Dict[str, Any], limits: Optional[LimitDefaults] = None
) -> ChainModel:
    """
    Build a ChainModel from an already parsed document.

    Raises:
        ChainConfigError: With every schema and invariant violation found.
    """
    errors = schema_errors(doc, CHAIN_SCHEMA)
    if errors:
        raise ChainConfigError(errors)
    limits = limits or get_config().limits

    modules = []
    for i, mod in enumerate(doc["modules"]):
        where = f"modules.{i}"
        if mod.get("joint_type", "revolute") != "revolute":
            errors.append(f"{where}.joint_type: only revolute joints are supported")
        axis_doc = mod["axis"]
        if isinstance(axis_doc, str):
            axis = _axis_vector(axis_doc)
        else:
            axis = np.asarray(axis_doc, dtype=float)
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > AXIS_NORMALIZE_TOL:
            errors.append(f"{where}.axis: norm {norm:.6g} is not within 1e-6 of 1")
        elif norm != 1.0:
            axis = axis / norm
        lim = mod.get("limits", {})
        q_lim = lim.get("q", (-limits.q, limits.q))
        if not q_lim[0] < q_lim[1]:
            errors.append(
                f"{where}.limits.q: lower ≥ upper ({q_lim[0]}, {q_lim[1]})"
            )
        parent = RigidTransform(
            exp_so3(mod.get("pre_rotation", (0.0, 0.0, 0.0))),
            np.asarray(mod.get("offset", (0.0, 0.0, 0.0)), dtype=float),
        )
        modules.append(
            JointModule(
                axis=axis,
                parent_transform=parent,
                q_limits=(q_lim[0], q_lim[1]),
                qd_limit=lim.get("qd", limits.qd),
                qdd_limit=lim.get("qdd", limits.qdd),
            )
        )
    if errors:
        raise ChainConfigError(errors)

    chain = ChainModel(
        modules=tuple(modules),
        base_transform=_transform_from_doc(doc.get("base")),
        tool_transform=_transform_from_doc(doc.get("tool")),
        name=doc.get("name", "chain"),
    )
    violations = validate_chain(chain)
    if violations:
        raise ChainConfigError(violations)
    return chain


def load_chain(text: str, limits: Optional[LimitDefaults] = None) -> ChainModel:
    """
    Parse and validate a YAML chain document.

    Omitted limits take the configured defaults.

    Raises:
        ChainConfigError: On YAML syntax errors (with line and column) or
            any schema/invariant violation (all of them, not just the first).
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        problem = getattr(e, "problem", None) or str(e)
        if mark is not None:
            raise ChainConfigError(
                [f"line {mark.line + 1}, column {mark.column + 1}: {problem}"]
            )
        raise ChainConfigError([f"YAML error: {problem}"])
    if not isinstance(doc, dict):
        raise ChainConfigError(["(root): document must be a mapping"])
    return chain_from_document(doc, limits)


def _transform_doc(tf: RigidTransform) -> Dict[str, List[float]]:
    return {
        "translation": tf.translation.tolist(),
        "rotation": log_so3(tf.rotation).tolist(),
    }


def chain_to_document(chain: ChainModel) -> Dict[str, Any]:
    """Document form of a chain; ``chain_from_document`` inverts it."""
    return {
        "name": chain.name,
        "base": _transform_doc(chain.base_transform),
        "tool": _transform_doc(chain.tool_transform),
        "modules": [
            {
                "axis": m.axis.tolist(),
                "offset": m.parent_transform.translation.tolist(),
                "pre_rotation": log_so3(m.parent_transform.rotation).tolist(),
                "limits": {
                    "q": [float(m.q_limits[0]), float(m.q_limits[1])],
                    "qd": float(m.qd_limit),
                    "qdd": float(m.qdd_limit),
                },
            }
            for m in chain.modules
        ],
    }


def serialize_chain(chain: ChainModel) -> str:
    """YAML text of a chain document."""
    return yaml.safe_dump(chain_to_document(chain), sort_keys=False)


def resolve_chain(ref: Union[str, Dict[str, Any], ChainModel]) -> ChainModel:
    """
    Resolve a builtin name, a YAML file path, a parsed document or a chain.

    Raises:
        ChainConfigError: If the reference cannot be resolved or is invalid.
    """
    if isinstance(ref, ChainModel):
        return ref
    if isinstance(ref, dict):
        return chain_from_document(ref)
    catalog = builtin_morphologies()
    if ref in catalog:
        return catalog[ref]
    if ref in ("planar_2r", "2r"):
        return planar_2r()
    if os.path.isfile(ref):
        with open(ref) as f:
            return load_chain(f.read())
    raise ChainConfigError([f"unknown chain '{ref}': not a builtin name or a file"])
