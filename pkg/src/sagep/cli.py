"""Command-line front end.

Subcommands: run (execute a training run from a JSON config), replay
(passively re-run selection against a stored baseline database), report
(recompute metrics files from a database), hv (hypervolume coverage of a
point file).  Exit codes: 0 success, 1 configuration error, 2 runtime
error.  SAGEP_LOG_LEVEL controls log verbosity (DEBUG/INFO/WARNING/...).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .embedding import IngestError
from .evaluators import SetupError
from .metrics import emit_report, hypervolume, hypervolume_coverage
from .orchestrator import (ConfigError, EvaluationDatabase, ReplayError,
                           RunError, load_run_config, metrics_from_records,
                           passive_replay, run_training)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _setup_logging() -> None:
    level_name = os.environ.get("SAGEP_LOG_LEVEL", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sagep",
        description="Surrogate-assisted symbolic regression training runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a training run")
    p_run.add_argument("--config", required=True, help="JSON run config")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--baseline", action="store_true",
                       help="disable the surrogate (evaluate every candidate)")

    p_replay = sub.add_parser("replay",
                              help="passively replay a stored database")
    p_replay.add_argument("--db", required=True, help="JSONL database")
    p_replay.add_argument("--config", required=True, help="JSON run config")

    p_report = sub.add_parser("report",
                              help="recompute metrics files from a database")
    p_report.add_argument("--db", required=True, help="JSONL database")
    p_report.add_argument("--out", required=True, help="output directory")

    p_hv = sub.add_parser("hv", help="hypervolume coverage of a point file")
    p_hv.add_argument("--points", required=True,
                      help="text file, one comma-separated objective vector "
                           "per line")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.baseline:
        config = dataclasses.replace(config, surrogate_enabled=False)
    db, metrics = run_training(config)
    out_dir = Path(config.output_dir)
    db_path = db.write(out_dir / "db.jsonl")
    csv_path, summary_path = emit_report(metrics, out_dir)
    print(f"database: {db_path}")
    print(f"metrics: {csv_path}")
    print(f"summary: {summary_path}")
    print(f"expensive evaluations: {metrics.total_expensive}")
    print(f"final coverage: {metrics.final_coverage!r}")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    db = EvaluationDatabase.read(args.db)
    metrics = passive_replay(db, config)
    print(f"generations: {len(metrics.rows)}")
    print(f"revealed expensive records: {metrics.total_expensive} "
          f"of {len(db.records)}")
    print(f"selection ratio: {metrics.final_selection_ratio!r}")
    print(f"relative error: {metrics.final_relative_error!r}")
    print(f"final coverage: {metrics.final_coverage!r}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    db = EvaluationDatabase.read(args.db)
    metrics = metrics_from_records(db.records)
    csv_path, summary_path = emit_report(metrics, Path(args.out))
    print(f"metrics: {csv_path}")
    print(f"summary: {summary_path}")
    return EXIT_OK


def _cmd_hv(args: argparse.Namespace) -> int:
    try:
        points = np.loadtxt(args.points, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read points file: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"points file is not numeric CSV: {exc}") from None
    coverage = hypervolume_coverage(points)
    ref = points.max(axis=0)
    print(f"points: {points.shape[0]}")
    print(f"hypervolume: {hypervolume(points, ref)!r}")
    print(f"coverage: {coverage!r}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "replay": _cmd_replay,
                "report": _cmd_report, "hv": _cmd_hv}
    try:
        return handlers[args.command](args)
    except (ConfigError, IngestError, SetupError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunError, ReplayError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
