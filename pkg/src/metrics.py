"""
Tracking metrics and box-plot statistics.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

logger = logging.getLogger(__name__)

AXES = ("ep_x", "ep_y", "ep_z", "eo_x", "eo_y", "eo_z")


@dataclass(frozen=True, eq=False)
class TrackingErrors:
    """Per-cycle absolute position (m) and orientation (rad) errors."""

    e_p: np.ndarray  # n x 3
    e_o: np.ndarray  # n x 3

    def series(self) -> Dict[str, np.ndarray]:
        stacked = np.hstack([self.e_p, self.e_o])
        return {axis: stacked[:, i] for i, axis in enumerate(AXES)}


@dataclass(frozen=True)
class AxisStats:
    """Box-plot statistics of one error series (type-7 quantiles)."""

    median: float
    q1: float
    q3: float
    iqr: float
    whisker_low: float
    whisker_high: float
    outliers: int
    max: float
    count: int

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


ErrorSummary = Dict[str, AxisStats]


def tracking_errors(
    p: np.ndarray, o: np.ndarray, p_ref: np.ndarray, o_ref: np.ndarray
) -> TrackingErrors:
    """
    Componentwise absolute tracking errors.

    e_p = |p - p_ref| and e_o = |log(R R_ref^T)|, the rotation vector of the
    world-frame relative rotation.

    Args:
        p, p_ref: n x 3 positions.
        o, o_ref: n x 4 scalar-first quaternions.
    """
    p = np.atleast_2d(p)
    p_ref = np.atleast_2d(p_ref)
    o = np.atleast_2d(o)
    o_ref = np.atleast_2d(o_ref)
    e_p = np.abs(p - p_ref)
    rot = Rotation.from_quat(o[:, [1, 2, 3, 0]])
    rot_ref = Rotation.from_quat(o_ref[:, [1, 2, 3, 0]])
    e_o = np.abs((rot * rot_ref.inv()).as_rotvec())
    return TrackingErrors(e_p, e_o)


def summarize(series: Sequence[float]) -> AxisStats:
    """
    Median, quartiles and 1.5 IQR whiskers of a non-empty series.

    Whiskers are the most extreme samples inside the fences; samples
    beyond them count as outliers.
    """
    data = np.asarray(series, dtype=float).reshape(-1)
    if data.size == 0:
        raise ValueError("cannot summarize an empty series")
    q1, median, q3 = np.percentile(data, [25, 50, 75])
    iqr = q3 - q1
    low_fence = q1 - 1.5 * iqr
    high_fence = q3 + 1.5 * iqr
    inside = data[(data >= low_fence) & (data <= high_fence)]
    return AxisStats(
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        iqr=float(iqr),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outliers=int(data.size - inside.size),
        max=float(data.max()),
        count=int(data.size),
    )


def summarize_errors(errors: TrackingErrors) -> ErrorSummary:
    """AxisStats for each of the six error axes."""
    return {axis: summarize(values) for axis, values in errors.series().items()}
