"""
Schema Validation - JSON Schema checks for chain and scenario documents.

Documents are parsed from YAML first; the schemas below catch structural
mistakes (missing keys, wrong types) and report every error with its
path before any semantic checks run.
"""

import logging
from typing import Any, Dict, List, Optional, Tuple

from jsonschema import Draft7Validator

logger = logging.getLogger(__name__)

_VEC3 = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 3,
    "maxItems": 3,
}

_TRANSFORM = {
    "type": "object",
    "properties": {"translation": _VEC3, "rotation": _VEC3},
    "additionalProperties": False,
}

_AXIS_NAMES = ["x", "y", "z", "+x", "+y", "+z", "-x", "-y", "-z"]

CHAIN_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["modules"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "base": _TRANSFORM,
        "tool": _TRANSFORM,
        "modules": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["axis"],
                "properties": {
                    "axis": {"oneOf": [{"enum": _AXIS_NAMES}, _VEC3]},
                    "offset": _VEC3,
                    "pre_rotation": _VEC3,
                    "joint_type": {"enum": ["revolute", "prismatic"]},
                    "limits": {
                        "type": "object",
                        "properties": {
                            "q": {
                                "type": "array",
                                "items": {"type": "number"},
                                "minItems": 2,
                                "maxItems": 2,
                            },
                            "qd": {"type": "number", "exclusiveMinimum": 0},
                            "qdd": {"type": "number", "exclusiveMinimum": 0},
                        },
                        "additionalProperties": False,
                    },
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["chain", "waypoints"],
    "properties": {
        "name": {"type": "string"},
        "chain": {"oneOf": [{"type": "string"}, {"type": "object"}]},
        "initial_q": {"type": "array", "items": {"type": "number"}},
        "initial_qd": {"type": "array", "items": {"type": "number"}},
        "waypoints": {"type": "array", "minItems": 1, "items": _VEC3},
        "orientation_goal": _VEC3,
        "controller": {"enum": ["hmpc", "mpc", "weighted_mpc", "hqp"]},
        "weights": {"type": "object"},
        "horizons": {"type": "object"},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "v_max": {"type": "number", "exclusiveMinimum": 0},
        "a_max": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "max_cycles": {"type": "integer", "minimum": 1},
        "noise_std": {"type": "number", "minimum": 0},
        "hold_time": {"type": "number", "exclusiveMinimum": 0},
        "start_from_current": {"type": "boolean"},
    },
    "additionalProperties": False,
}


def schema_errors(document: Any, schema: Dict[str, Any]) -> List[str]:
    """
    Every validation error of ``document``, each prefixed with its path.

    Args:
        document: Parsed document.
        schema: JSON Schema (Draft 7).

    Returns:
        List of "path: message" strings, empty when valid.
    """
    validator = Draft7Validator(schema)
    messages = []
    errors = sorted(
        validator.iter_errors(document),
        key=lambda e: [str(p) for p in e.absolute_path],
    )
    for error in errors:
        path = ".".join(str(p) for p in error.absolute_path) or "(root)"
        messages.append(f"{path}: {error.message}")
    return messages


def validate_document(
    document: Any, schema: Dict[str, Any]
) -> Tuple[bool, Optional[str]]:
    """
    Validate a document against a schema.

    Returns:
        Tuple of (is_valid, error_message) with all errors joined by "; ".
    """
    try:
        errors = schema_errors(document, schema)
    except Exception as e:
        logger.error(f"Unexpected error during validation: {e}")
        return False, f"Validation failed: {str(e)}"
    if not errors:
        return True, None
    return False, "; ".join(errors)
