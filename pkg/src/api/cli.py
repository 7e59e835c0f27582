# src/api/cli.py

"""
Command-line front end.

    python -m src.api.cli [--out-dir DIR] [--oversample N] [--quiet] run <scenario.json>
    python -m src.api.cli sweep <scenario.json> [--workers N]
    python -m src.api.cli verify-oracle [--cases N] [--seed S] [--workers N]

Exit status is 0 on success, otherwise the ``code`` of the DiSePError raised.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from src.api.schemas import build_scenario
from src.config.settings import Settings, get_settings
from src.pipeline.artifacts import ArtifactWriter
from src.pipeline.data_validation import load_scenario_document
from src.pipeline.runner import run_scenario
from src.pipeline.sweeps import run_sweep
from src.pipeline.verification import verify_oracle
from src.utils.exceptions import DiSePError, OracleToleranceError, ScenarioValidationError
from src.utils.logging import LoggingConfig, get_logger

logger = get_logger(__name__)


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="disep", description="DiSeP converter simulation toolkit.")
    parser.add_argument("--out-dir", default=settings.OUT_DIR, help="artifact directory (env DISEP_OUT_DIR)")
    parser.add_argument("--oversample", type=int, default=None, help="sub-steps per carrier period (>= 20)")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    parser.add_argument("--log-format", choices=["json", "console"], default=settings.LOG_FORMAT)
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    verbs = parser.add_subparsers(dest="verb", required=True)

    run_cmd = verbs.add_parser("run", help="simulate one scenario and write its artifacts")
    run_cmd.add_argument("scenario", type=Path)

    sweep_cmd = verbs.add_parser("sweep", help="run the sweep declared in a scenario")
    sweep_cmd.add_argument("scenario", type=Path)
    sweep_cmd.add_argument("--workers", type=int, default=settings.WORKERS)

    verify_cmd = verbs.add_parser("verify-oracle", help="randomized closed-form versus ODE comparison")
    verify_cmd.add_argument("--cases", type=int, default=settings.ORACLE_CASES, help="draws per loop family")
    verify_cmd.add_argument("--seed", type=int, default=settings.SEED)
    verify_cmd.add_argument("--workers", type=int, default=settings.WORKERS)
    return parser


def _print_table(frame: pd.DataFrame) -> None:
    print(frame.to_string(index=False))


def _cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    document, text = load_scenario_document(args.scenario)
    scenario = build_scenario(document, text)
    report = run_scenario(scenario, Path(args.out_dir), args.oversample, settings.OVERSAMPLE)
    _print_table(report.table())
    summary = report.summary
    print(f"settled: {report.settled}  periods: {summary['n_periods']}  thd: {summary['thd']}")
    if summary["efficiency"]:
        print(f"efficiency: {summary['efficiency']['efficiency']:.4f}")
    for path in report.artifacts:
        print(f"wrote {path}")
    return 0


def _cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    document, text = load_scenario_document(args.scenario)
    scenario = build_scenario(document, text)
    if scenario.sweep is None:
        raise ScenarioValidationError("scenario has no sweep block", field="sweep")
    frame, summary = run_sweep(
        document, scenario, Path(args.out_dir), args.workers, args.oversample, settings.OVERSAMPLE
    )
    _print_table(frame)
    for key, value in summary.items():
        print(f"{key}: {value}")
    return 0


def _cmd_verify(args: argparse.Namespace, settings: Settings) -> int:
    report = verify_oracle(args.cases, args.seed, workers=args.workers, raise_on_breach=False)
    writer = ArtifactWriter(Path(args.out_dir) / "verify_oracle")
    writer.write_csv("draws.csv", report.to_frame())
    writer.write_json("report.json", report.summary())
    for key, value in report.summary().items():
        if key != "failures":
            print(f"{key}: {value}")
    if not report.passed:
        for failure in report.failures[:10]:
            print(f"breach: {failure['reasons']} draw={failure['draw']}", file=sys.stderr)
        first = report.failures[0]
        raise OracleToleranceError(
            f"{len(report.failures)} of {len(report.checks)} draws breached a tolerance", draw=first["draw"]
        )
    return 0


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "verify-oracle": _cmd_verify}


def main(argv: Optional[List[str]] = None) -> int:
    settings = get_settings()
    parser = build_parser(settings)
    args = parser.parse_args(argv)

    level = "WARNING" if args.quiet else args.log_level
    LoggingConfig.configure_logging(level=level, log_format=args.log_format, log_file=settings.LOG_FILE)

    if args.oversample is not None and args.oversample < 20:
        print("error: --oversample must be >= 20", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.verb](args, settings)
    except DiSePError as exc:
        logger.error("command_failed", verb=args.verb, error=exc.__class__.__name__, message=exc.message)
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
