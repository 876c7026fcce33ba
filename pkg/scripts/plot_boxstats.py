"""
Plot box statistics from ``hmpc compare`` and error traces from ``hmpc run``.

    python scripts/plot_boxstats.py runs/cmp/boxstats.csv --out boxes.png
    python scripts/plot_boxstats.py runs/cmp/boxstats.csv --log runs/r1/log.csv

Needs the ``plot`` extra (matplotlib). Columns are read by name, see
docs/csv-schema.md.
"""

import argparse
import csv
import logging
from collections import defaultdict
from typing import Dict, List

import matplotlib.pyplot as plt

logger = logging.getLogger(__name__)

POSITION_AXES = ("ep_x", "ep_y", "ep_z")
ORIENTATION_AXES = ("eo_x", "eo_y", "eo_z")


def read_boxstats(path: str) -> Dict[str, Dict[str, List[dict]]]:
    """Rows grouped by scenario, then axis, in file order."""
    grouped: Dict[str, Dict[str, List[dict]]] = defaultdict(lambda: defaultdict(list))
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            grouped[row["scenario"]][row["axis"]].append(row)
    return grouped


def _bxp_stats(row: dict) -> dict:
    return {
        "label": row["controller"],
        "med": float(row["median"]),
        "q1": float(row["q1"]),
        "q3": float(row["q3"]),
        "whislo": float(row["whisker_low"]),
        "whishi": float(row["whisker_high"]),
        "fliers": [],
    }


def plot_boxstats(path: str):
    """One figure per scenario, one panel per error axis."""
    figures = []
    for scenario, axes_rows in read_boxstats(path).items():
        fig, panels = plt.subplots(2, 3, figsize=(12, 6), sharey="row")
        for panel, axis in zip(panels.flat, POSITION_AXES + ORIENTATION_AXES):
            rows = axes_rows.get(axis, [])
            if rows:
                panel.bxp([_bxp_stats(r) for r in rows], showfliers=False)
            panel.set_title(axis)
            panel.grid(True, axis="y")
        panels[0, 0].set_ylabel("position error [m]")
        panels[1, 0].set_ylabel("orientation error [rad]")
        fig.suptitle(scenario)
        fig.tight_layout()
        figures.append(fig)
    return figures


def plot_log(path: str):
    """Absolute tracking errors over time from a log.csv."""
    columns: Dict[str, List[float]] = defaultdict(list)
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            for name in ("t",) + POSITION_AXES + ORIENTATION_AXES:
                columns[name].append(float(row[name]))

    fig, (top, bottom) = plt.subplots(2, 1, figsize=(10, 6), sharex=True)
    for name in POSITION_AXES:
        top.plot(columns["t"], columns[name], label=name)
    for name in ORIENTATION_AXES:
        bottom.plot(columns["t"], columns[name], label=name)
    top.set_ylabel("position error [m]")
    bottom.set_ylabel("orientation error [rad]")
    bottom.set_xlabel("time [s]")
    for ax in (top, bottom):
        ax.legend()
        ax.grid(True)
    fig.tight_layout()
    return fig


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("boxstats", help="boxstats.csv written by hmpc compare")
    parser.add_argument("--log", help="log.csv written by hmpc run")
    parser.add_argument("--out", help="save to this file instead of showing")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    figures = plot_boxstats(args.boxstats)
    if args.log:
        figures.append(plot_log(args.log))
    if not args.out:
        plt.show()
        return
    stem, dot, ext = args.out.rpartition(".")
    for i, fig in enumerate(figures):
        target = args.out if len(figures) == 1 else f"{stem}_{i}{dot}{ext}"
        fig.savefig(target, dpi=150)
        logger.info(f"Wrote {target}")


if __name__ == "__main__":
    main()
