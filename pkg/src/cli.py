"""
Command-line front end.

    hmpc run --scenario spiral_E --controller hmpc --out r1/
    hmpc compare --scenario spiral_A --scenario spiral_B --out cmp/
    hmpc verify --chain planar_2r --out v/
    hmpc validate-chain my_arm.yaml

Exit codes: 0 success, 1 verification thresholds missed, 2 trajectory
generation failed, 3 configuration error. Outputs are staged in a hidden
directory inside ``--out`` and only moved into place when a command
succeeds.
"""

import argparse
import logging
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import asdict, replace
from typing import Any, Dict, Iterator, List, Optional, Sequence

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator

from config import get_config
from metrics import summarize_errors
from morphologies import ChainConfigError, load_chain, resolve_chain
from oracles import run_verification
from reporting import (
    format_checks,
    reference_checksum,
    winners,
    write_boxstats_csv,
    write_checks_csv,
    write_log_csv,
    write_manifest,
    write_order_report_csv,
    write_summary_csv,
    write_winners_csv,
)
from scenarios import resolve_scenario
from simulator import Scenario, ScenarioError, run_closed_loop, run_many
from so3 import KinematicsError
from trajectory import TrajectoryError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_TRAJECTORY = 2
EXIT_CONFIG = 3

CONTROLLERS = ("hmpc", "mpc", "hqp")

# scalar scenario keys and nested sections accepted by --override
_OVERRIDE_ROOTS = {
    "dt",
    "seed",
    "v_max",
    "a_max",
    "max_cycles",
    "noise_std",
    "hold_time",
    "initial_q",
    "initial_qd",
    "orientation_goal",
    "weights",
    "horizons",
}


class RunConfig(BaseModel):
    """Validated command-line options for run and compare."""

    scenarios: List[str] = Field(..., min_length=1)
    controller: Optional[str] = None
    out: str
    dt: Optional[float] = Field(None, gt=0)
    seed: Optional[int] = None
    horizon_h: Optional[int] = Field(None, ge=1)
    horizon_l: Optional[int] = Field(None, ge=1)
    overrides: Dict[str, Any] = Field(default_factory=dict)
    record_timing: bool = False

    @field_validator("controller")
    @classmethod
    def validate_controller(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and v not in CONTROLLERS:
            raise ValueError(f"controller must be one of {', '.join(CONTROLLERS)}")
        return v

    @field_validator("overrides")
    @classmethod
    def validate_overrides(cls, v: Dict[str, Any]) -> Dict[str, Any]:
        for key in v:
            root = key.split(".", 1)[0]
            if root not in _OVERRIDE_ROOTS:
                raise ValueError(f"unknown override key '{key}'")
            if root in ("weights", "horizons") and "." not in key:
                raise ValueError(f"override '{key}' needs a field, e.g. {root}.<name>")
        return v


def parse_overrides(items: Optional[Sequence[str]]) -> Dict[str, Any]:
    """
    Parse ``key=value`` pairs; values are read as YAML scalars or lists.

    Raises:
        ValueError: If an item has no ``=``.
    """
    overrides: Dict[str, Any] = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ValueError(f"override '{item}' must look like key=value")
        overrides[key.strip()] = yaml.safe_load(raw)
    return overrides


def apply_run_config(sc: Scenario, cfg: RunConfig) -> Scenario:
    """
    Scenario with the command-line overrides applied and re-validated.

    ``--horizon-h`` also sets the single-level MPC horizon.
    """
    doc = sc.model_dump()
    if cfg.controller:
        doc["controller"] = cfg.controller
    if cfg.dt is not None:
        doc["dt"] = cfg.dt
    if cfg.seed is not None:
        doc["seed"] = cfg.seed
    if cfg.horizon_h is not None:
        doc["horizons"]["N_h"] = cfg.horizon_h
        doc["horizons"]["N"] = cfg.horizon_h
    if cfg.horizon_l is not None:
        doc["horizons"]["N_l"] = cfg.horizon_l
    for key, value in cfg.overrides.items():
        root, _, leaf = key.partition(".")
        if leaf:
            doc[root][leaf] = value
        else:
            doc[root] = value
    return Scenario(**doc)


@contextmanager
def staged_output(out: str) -> Iterator[str]:
    """
    Yield a staging directory inside ``out``; publish its files on success.

    On any exception the staging directory is removed and, if ``out`` did
    not exist before, ``out`` as well.
    """
    existed = os.path.isdir(out)
    os.makedirs(out, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".partial-", dir=out)
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        if not existed:
            shutil.rmtree(out, ignore_errors=True)
        raise
    for root, _, files in os.walk(staging):
        rel = os.path.relpath(root, staging)
        target = os.path.normpath(os.path.join(out, rel))
        os.makedirs(target, exist_ok=True)
        for name in files:
            os.replace(os.path.join(root, name), os.path.join(target, name))
    shutil.rmtree(staging, ignore_errors=True)


def _config_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_CONFIG


def _run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        scenarios=args.scenario,
        controller=getattr(args, "controller", None),
        out=args.out,
        dt=args.dt,
        seed=args.seed,
        horizon_h=args.horizon_h,
        horizon_l=args.horizon_l,
        overrides=parse_overrides(args.override),
        record_timing=args.timing == "wall"
        or get_config().simulation.record_timing,
    )


def _guarded(command):
    """Map library exceptions onto exit codes."""

    def wrapper(args: argparse.Namespace) -> int:
        try:
            return command(args)
        except TrajectoryError as e:
            print(f"error: trajectory generation failed: {e.message}", file=sys.stderr)
            return EXIT_TRAJECTORY
        except ChainConfigError as e:
            for err in e.errors:
                print(f"error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        except ValidationError as e:
            return _config_error(str(e))
        except (ScenarioError, KinematicsError, ValueError, OSError) as e:
            return _config_error(str(e))

    return wrapper


# Commands


@_guarded
def cmd_run(args: argparse.Namespace) -> int:
    """Run one scenario and write log.csv, summary.csv and manifest.json."""
    cfg = _run_config(args)
    sc = apply_run_config(resolve_scenario(cfg.scenarios[0]), cfg)
    chain = resolve_chain(sc.chain)

    with staged_output(cfg.out) as staging:
        log = run_closed_loop(sc, chain)
        write_log_csv(os.path.join(staging, "log.csv"), log, cfg.record_timing)
        write_summary_csv(
            os.path.join(staging, "summary.csv"),
            summarize_errors(log.errors()),
        )
        write_manifest(
            os.path.join(staging, "manifest.json"),
            "run",
            sc.model_dump(),
            chain=chain.name,
            controller=log.controller,
            cycles=log.cycles,
            statuses=log.status_counts(),
            reference_sha256=reference_checksum(log),
            files=["log.csv", "summary.csv"],
        )
    logger.info(f"Wrote {log.cycles} cycles to {cfg.out}")
    return EXIT_OK


@_guarded
def cmd_compare(args: argparse.Namespace) -> int:
    """Run every controller on every scenario against identical references."""
    cfg = _run_config(args)
    jobs = []
    for ref in cfg.scenarios:
        base = resolve_scenario(ref)
        for controller in CONTROLLERS:
            controller_cfg = cfg.model_copy(update={"controller": controller})
            jobs.append(apply_run_config(base, controller_cfg))
    # fail on bad chains before any worker starts
    for sc in jobs:
        resolve_chain(sc.chain)

    logs = run_many(jobs, get_config().simulation.max_concurrent_runs)

    with staged_output(cfg.out) as staging:
        box_rows, checksums = {}, {}
        for sc, log in zip(jobs, logs):
            run_dir = os.path.join(staging, sc.name, log.controller)
            os.makedirs(run_dir, exist_ok=True)
            write_log_csv(os.path.join(run_dir, "log.csv"), log, cfg.record_timing)
            box_rows.setdefault(sc.name, {})[log.controller] = summarize_errors(
                log.errors()
            )
            checksums.setdefault(sc.name, set()).add(reference_checksum(log))
        for name, digests in checksums.items():
            if len(digests) != 1:
                raise ScenarioError(f"{name}: controllers saw different references")

        write_boxstats_csv(os.path.join(staging, "boxstats.csv"), box_rows)
        write_winners_csv(os.path.join(staging, "winners.csv"), box_rows)
        write_manifest(
            os.path.join(staging, "manifest.json"),
            "compare",
            {sc.name: sc.model_dump() for sc in jobs},
            controllers=list(CONTROLLERS),
            reference_sha256={k: next(iter(v)) for k, v in checksums.items()},
        )
        winner_rows = {
            name: _winner_line(summaries) for name, summaries in box_rows.items()
        }
    for name, line in winner_rows.items():
        print(f"{name}: {line}")
    return EXIT_OK


def _winner_line(summaries: Dict[str, Any]) -> str:
    best = winners(summaries)
    return ", ".join(f"{axis}={controller}" for axis, controller in best.items())


def _corrupted_jacobian(chain, q):
    from chain_model import jacobian

    j = jacobian(chain, q)
    j[0, 0] += 1e-3
    return j


@_guarded
def cmd_verify(args: argparse.Namespace) -> int:
    """Run the oracle suite on a chain; exit 1 if any threshold is missed."""
    chain = resolve_chain(args.chain)
    cfg = get_config().verification
    updates = {}
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.samples is not None:
        updates["lipschitz_samples"] = args.samples
        updates["bound_samples"] = args.samples
    if args.step_sizes:
        updates["step_sizes"] = tuple(args.step_sizes)
    cfg = replace(cfg, **updates)

    jacobian_fn = _corrupted_jacobian if args.corrupt_jacobian else None
    with staged_output(args.out) as staging:
        report = run_verification(chain, cfg, jacobian_fn=jacobian_fn)
        write_order_report_csv(os.path.join(staging, "order_report.csv"), report.order)
        write_checks_csv(os.path.join(staging, "checks.csv"), report.checks)
        write_manifest(
            os.path.join(staging, "manifest.json"),
            "verify",
            asdict(cfg),
            chain=chain.name,
            passed=report.passed,
            lipschitz=report.lipschitz.as_dict() if report.lipschitz else None,
        )

    print(format_checks(report.checks))
    if not report.passed:
        names = ", ".join(c.name for c in report.failed())
        print(f"verification failed: {names}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_validate_chain(args: argparse.Namespace) -> int:
    """Validate a chain document and print every violation."""
    try:
        with open(args.path) as f:
            text = f.read()
    except OSError as e:
        return _config_error(f"cannot read {args.path}: {e.strerror}")
    try:
        chain = load_chain(text)
    except ChainConfigError as e:
        for err in e.errors:
            print(f"{args.path}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.path}: valid chain '{chain.name}' with {chain.n_joints} joints")
    return EXIT_OK


# Parser


def _add_run_options(parser: argparse.ArgumentParser, with_controller: bool) -> None:
    parser.add_argument(
        "--scenario",
        action="append",
        required=True,
        help="stock scenario (spiral_A, singular_C, ...) or scenario YAML file",
    )
    if with_controller:
        parser.add_argument("--controller", choices=CONTROLLERS)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--dt", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--horizon-h", type=int, dest="horizon_h")
    parser.add_argument("--horizon-l", type=int, dest="horizon_l")
    parser.add_argument(
        "--override",
        action="append",
        metavar="KEY=VALUE",
        help="scenario override, e.g. weights.q_position=500 or max_cycles=200",
    )
    parser.add_argument(
        "--timing",
        choices=("none", "wall"),
        default="none",
        help="write measured solve times (breaks byte-identical logs)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmpc", description="Hierarchical MPC for modular manipulators"
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one closed-loop scenario")
    _add_run_options(run, with_controller=True)
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="compare hmpc, mpc and hqp")
    _add_run_options(compare, with_controller=False)
    compare.set_defaults(func=cmd_compare)

    verify = sub.add_parser("verify", help="run the verification oracles")
    verify.add_argument("--chain", default="planar_2r")
    verify.add_argument("--out", required=True)
    verify.add_argument("--trials", type=int)
    verify.add_argument("--samples", type=int, help="Lipschitz and bound samples")
    verify.add_argument("--seed", type=int)
    verify.add_argument("--step-sizes", type=float, nargs="+", dest="step_sizes")
    verify.add_argument(
        "--corrupt-jacobian", action="store_true", help=argparse.SUPPRESS
    )
    verify.set_defaults(func=cmd_verify)

    validate = sub.add_parser("validate-chain", help="validate a chain document")
    validate.add_argument("path")
    validate.set_defaults(func=cmd_validate_chain)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point for the ``hmpc`` console script."""
    parser = build_parser()
    args = parser.parse_args(argv)
    level = args.log_level or get_config().simulation.log_level
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
