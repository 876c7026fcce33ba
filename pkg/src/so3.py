"""
Rotation utilities - SO(3) maps and unit quaternions.

Quaternions are scalar-first (w, x, y, z) and canonicalized to a
non-negative scalar part. scipy's Rotation uses scalar-last internally,
so every conversion goes through the helpers below.
"""

import numpy as np
from scipy.spatial.transform import Rotation

QUAT_NORM_TOL = 1e-9


class KinematicsError(ValueError):
    """Raised for malformed kinematic inputs (dimensions, non-unit quaternions)."""

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


def skew(v: np.ndarray) -> np.ndarray:
    """Return the 3x3 cross-product matrix of a 3-vector."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m: np.ndarray) -> np.ndarray:
    """Inverse of skew for a (near) skew-symmetric matrix."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def exp_so3(rotvec: np.ndarray) -> np.ndarray:
    """Matrix exponential of the skew matrix of a rotation vector."""
    return Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix()


def log_so3(rotation: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle, angle in [0, pi]) of a rotation matrix."""
    return Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_rotvec()


def axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix for a rotation of ``angle`` about a unit ``axis``."""
    return exp_so3(np.asarray(axis, dtype=float) * float(angle))


def is_rotation(rotation: np.ndarray, tol: float = 1e-12) -> bool:
    """True when the matrix is orthonormal with determinant +1 within tol."""
    r = np.asarray(rotation, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(r) - 1.0) <= tol


def canonical_quat(o: np.ndarray, tol: float = QUAT_NORM_TOL) -> np.ndarray:
    """
    Normalize a quaternion and flip it to the eta >= 0 hemisphere.

    Args:
        o: Scalar-first quaternion.
        tol: Allowed deviation of the input norm from one. Pass ``None``
            to normalize arbitrary non-zero quaternions.

    Raises:
        KinematicsError: If the quaternion is not unit within ``tol``.
    """
    o = np.asarray(o, dtype=float)
    if o.shape != (4,):
        raise KinematicsError(f"quaternion must have 4 components, got {o.shape}")
    norm = np.linalg.norm(o)
    if norm == 0.0 or (tol is not None and abs(norm - 1.0) > tol):
        raise KinematicsError(f"quaternion norm {norm:.3e} is not unit")
    o = o / norm
    if o[0] < 0.0:
        o = -o
    return o


def quat_from_matrix(rotation: np.ndarray) -> np.ndarray:
    """Canonical scalar-first quaternion of a rotation matrix."""
    x, y, z, w = Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_quat()
    return canonical_quat(np.array([w, x, y, z]), tol=None)


def matrix_from_quat(o: np.ndarray) -> np.ndarray:
    """Rotation matrix of a scalar-first unit quaternion."""
    w, x, y, z = canonical_quat(o)
    return Rotation.from_quat([x, y, z, w]).as_matrix()


def align_hemisphere(o: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Return ``o`` or ``-o``, whichever has a non-negative dot with ``reference``."""
    o = np.asarray(o, dtype=float)
    return -o if float(np.dot(o, reference)) < 0.0 else o
