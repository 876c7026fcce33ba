"""
Reporting - CSV and manifest writers for runs, comparisons and verification.

Column layouts are fixed and versioned by ``CSV_SCHEMA_VERSION``; plot
scripts read columns by name. Floats are written with ``repr`` so a given
run always produces byte-identical files.
"""

import csv
import hashlib
import json
import logging
import os
import subprocess
from importlib.metadata import PackageNotFoundError, version
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np

from metrics import AXES, ErrorSummary
from oracles import CheckResult, OrderExperimentReport
from simulator import ExecutionLog

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
DIST_NAME = "hmpc-toolkit"
FALLBACK_VERSION = "v0.1.0-unknown"

STAT_FIELDS = (
    "median",
    "q1",
    "q3",
    "iqr",
    "whisker_low",
    "whisker_high",
    "outliers",
    "max",
    "count",
)


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_rows(
    path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def log_header(n_joints: int) -> List[str]:
    """log.csv columns for a chain with ``n_joints`` joints, in order."""
    header = ["t"]
    header += [f"q_{i}" for i in range(n_joints)]
    header += [f"qd_{i}" for i in range(n_joints)]
    header += [f"u_qd_{i}" for i in range(n_joints)]
    header += [f"u_qdd_{i}" for i in range(n_joints)]
    header += ["p_x", "p_y", "p_z", "o_w", "o_x", "o_y", "o_z"]
    header += ["pref_x", "pref_y", "pref_z", "oref_w", "oref_x", "oref_y", "oref_z"]
    header += ["ep_x", "ep_y", "ep_z", "eo_x", "eo_y", "eo_z"]
    header += ["qp_status", "solve_time_us"]
    return header


def write_log_csv(path: str, log: ExecutionLog, record_timing: bool = False) -> None:
    """
    Write one run as log.csv.

    Args:
        path: Destination file.
        log: The execution log.
        record_timing: Write measured solve times; zeros otherwise so that
            repeated runs stay byte-identical.
    """
    rows = []
    for k in range(log.cycles):
        micros = int(round(log.solve_time[k] * 1e6)) if record_timing else 0
        rows.append(
            [log.t[k]]
            + log.q[k].tolist()
            + log.qd[k].tolist()
            + log.u[k].tolist()
            + log.x[k, :7].tolist()
            + log.x_ref[k, :7].tolist()
            + log.e_p[k].tolist()
            + log.e_o[k].tolist()
            + [log.status[k], micros]
        )
    _write_rows(path, log_header(log.n_joints), rows)
    logger.debug(f"Wrote {log.cycles} rows to {path}")


def write_summary_csv(path: str, summary: ErrorSummary) -> None:
    """summary.csv: one row per error axis."""
    rows = [[axis] + [getattr(summary[axis], f) for f in STAT_FIELDS] for axis in AXES]
    _write_rows(path, ["axis", *STAT_FIELDS], rows)


ScenarioSummaries = Mapping[str, Mapping[str, ErrorSummary]]


def write_boxstats_csv(path: str, results: ScenarioSummaries) -> None:
    """boxstats.csv: one row per scenario, controller and error axis."""
    rows = [
        [scenario, controller, axis] + [getattr(summary[axis], f) for f in STAT_FIELDS]
        for scenario, summaries in results.items()
        for controller, summary in summaries.items()
        for axis in AXES
    ]
    _write_rows(path, ["scenario", "controller", "axis", *STAT_FIELDS], rows)


def winners(summaries: Mapping[str, ErrorSummary]) -> Dict[str, str]:
    """Controller with the lowest median per axis; ties go to the first listed."""
    result = {}
    for axis in AXES:
        result[axis] = min(summaries, key=lambda c: summaries[c][axis].median)
    return result


def write_winners_csv(path: str, results: ScenarioSummaries) -> None:
    """winners.csv: per scenario and axis, the best controller and all medians."""
    controllers = list(next(iter(results.values())))
    rows = []
    for scenario, summaries in results.items():
        best = winners(summaries)
        rows += [
            [scenario, axis, best[axis]]
            + [summaries[c][axis].median for c in controllers]
            for axis in AXES
        ]
    header = ["scenario", "axis", "winner"] + [f"median_{c}" for c in controllers]
    _write_rows(path, header, rows)


def reference_checksum(log: ExecutionLog) -> str:
    """SHA-256 over the reference pose columns as they appear in log.csv."""
    digest = hashlib.sha256()
    for row in log.x_ref[:, :7]:
        digest.update((",".join(_fmt(v) for v in row) + "\n").encode())
    return digest.hexdigest()


def write_order_report_csv(path: str, report: OrderExperimentReport) -> None:
    """
    order_report.csv: one row per (section, step size) with median errors.

    The velocity section lists every requested step size; the acceleration
    section has a single summary row.
    """
    med_f, med_r = report.median_errors()
    wins = np.mean(report.relinearized_errors < report.frozen_errors, axis=0)
    rows = []
    for c, s in enumerate(report.step_sizes):
        rows.append(
            [
                "velocity",
                s,
                report.trials,
                med_f[c],
                med_r[c],
                wins[c],
                report.frozen_slope,
                report.relinearized_slope,
                report.neglected_term_scale,
            ]
        )
    acc = report.acceleration
    if acc is not None:
        rows.append(
            [
                "acceleration",
                "",
                acc.frozen_errors.size,
                float(np.median(acc.frozen_errors)),
                float(np.median(acc.relinearized_errors)),
                acc.win_rate,
                "",
                "",
                acc.bound_constant,
            ]
        )
    header = [
        "section",
        "step_size",
        "trials",
        "median_frozen_error",
        "median_relinearized_error",
        "win_rate",
        "frozen_slope",
        "relinearized_slope",
        "scale",
    ]
    _write_rows(path, header, rows)


def write_checks_csv(path: str, checks: Sequence[CheckResult]) -> None:
    """checks.csv: the per-check pass/fail table."""
    rows = [[c.name, c.value, c.threshold, c.passed, c.detail] for c in checks]
    _write_rows(path, ["check", "value", "threshold", "passed", "detail"], rows)


def format_checks(checks: Sequence[CheckResult]) -> str:
    """Plain-text table of checks for the terminal."""
    width = max(len(c.name) for c in checks)
    lines = []
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        line = f"{mark}  {c.name:<{width}}  {c.value:.6g}  ({c.threshold})"
        if c.detail:
            line += f"  {c.detail}"
        lines.append(line)
    return "\n".join(lines)


def package_version() -> str:
    """git-describe string of the source tree, else the installed version."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        return f"v{version(DIST_NAME)}"
    except PackageNotFoundError:
        return FALLBACK_VERSION


def write_manifest(path: str, command: str, config: Dict[str, Any], **extra) -> None:
    """
    manifest.json: schema version, tool version, command and config echo.

    Extra keyword arguments are stored as top-level keys.
    """
    manifest = {
        "schema_version": CSV_SCHEMA_VERSION,
        "version": package_version(),
        "command": command,
        "config": config,
        **extra,
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")
