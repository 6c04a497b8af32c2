"""Command line interface.

Subcommands: ``run <config>``, ``list-experiments``, ``validate <config>``,
``report <result> --format {table,csv,json}``, ``seed-audit <result>``.
A ``--seed`` flag on ``run`` overrides the config seed; the environment
variable CONVEXLAB_THREADS caps grid-cell parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..errors import ConvexLabError
from .config import ExperimentConfig
from .experiments import list_experiments, run
from .report import ExperimentReport, seed_audit


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convexlab",
        description="packing-bound experiments for moment bodies of "
                    "log-concave measures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to a JSON config file")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--output", default=None,
                       help="override the config output path")

    sub.add_parser("list-experiments", help="show the experiment catalog")

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config", help="path to a JSON config file")

    p_rep = sub.add_parser("report", help="render a persisted result")
    p_rep.add_argument("result", help="path to a result JSON file")
    p_rep.add_argument("--format", choices=["table", "csv", "json"],
                       default="table")

    p_aud = sub.add_parser("seed-audit",
                           help="re-run a result's config and compare numbers")
    p_aud.add_argument("result", help="path to a result JSON file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConvexLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "list-experiments":
        for entry in list_experiments():
            print(f"{entry['name']}: {entry['description']}")
        return 0

    if args.command == "validate":
        cfg = ExperimentConfig.load(args.config)
        cfg.validate()
        print(f"ok: {cfg.experiment} (hash {cfg.config_hash()})")
        return 0

    if args.command == "run":
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.output is not None:
            cfg.output = args.output
        report = run(cfg)
        fitted = report.metadata["fitted_constants"]
        print(f"{cfg.experiment}: {len(report.rows)} rows; fitted {fitted}")
        if cfg.output:
            print(f"report written to {cfg.output}")
        if report.metadata["skipped"]:
            print(f"skipped cells: {len(report.metadata['skipped'])}")
        return 0

    if args.command == "report":
        rep = ExperimentReport.load(args.result)
        if args.format == "table":
            print(rep.to_table())
        elif args.format == "csv":
            sys.stdout.write(rep.to_csv())
        else:
            json.dump(rep.to_dict(), sys.stdout, indent=1, sort_keys=True)
            print()
        return 0

    if args.command == "seed-audit":
        rep = ExperimentReport.load(args.result)
        ok, mismatches = seed_audit(rep)
        if ok:
            print("seed audit passed: all numeric columns reproduced")
            return 0
        print(f"seed audit FAILED: {len(mismatches)} mismatching rows")
        return 1

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
