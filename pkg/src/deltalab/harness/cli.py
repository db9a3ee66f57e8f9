"""Command line entry point.

Exit codes: 0 success, 1 configuration/validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from pydantic import ValidationError

from .config import ExperimentConfig, config_schema, load_config
from .report import BENCH_HEADER, SWEEP_HEADER, emit_report, emit_table
from .runner import bench, run_bounds, run_experiment, sweep
from .tensor_io import TensorFormatError
from .workload import CapacityError

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (defaults used when omitted)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", default="reports", help="report destination (default: reports)")
    common.add_argument("--deterministic", action="store_true", help="zero all timings")
    common.add_argument("--format", default="json,csv", help="comma list of json,csv")
    common.add_argument("--jobs", type=int, default=1, help="heads evaluated in parallel")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="deltalab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="config -> report")
    run.add_argument("--accounting-only", action="store_true",
                     help="entry counts only; no matrices are materialized")
    b = sub.add_parser("bench", parents=[common], help="CPU micro-benchmark per method")
    b.add_argument("--repeats", type=int, help="timing repeats (>= 3)")
    sub.add_parser("bound", parents=[common], help="remainder-bound sweep")
    sw = sub.add_parser("sweep", parents=[common], help="gamma x window cartesian sweep")
    sw.add_argument("--gammas", type=_int_list, help="e.g. 8,16,32")
    sw.add_argument("--windows", type=_int_list, help="e.g. 32,64")
    sub.add_parser("schema", help="print the config JSON schema")
    return parser


def _load(args) -> ExperimentConfig:
    overrides = {"seed": args.seed}
    if getattr(args, "accounting_only", False):
        overrides["accounting_only"] = True
    if args.config:
        cfg = load_config(args.config, **overrides)
    else:
        cfg = ExperimentConfig.model_validate({k: v for k, v in overrides.items() if v is not None})
    if args.command == "sweep" and (args.gammas or args.windows):
        sweep_spec = cfg.sweep.model_dump()
        if args.gammas:
            sweep_spec["gammas"] = args.gammas
        if args.windows:
            sweep_spec["windows"] = args.windows
        cfg = ExperimentConfig.model_validate({**cfg.model_dump(), "sweep": sweep_spec})
    return cfg


def _report_validation(exc: ValidationError) -> None:
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        print(f"config error at {path}: {err['msg']}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "schema":
        print(json.dumps(config_schema(), indent=2))
        return EXIT_OK
    formats = tuple(f.strip() for f in args.format.split(",") if f.strip())
    if not set(formats) <= {"json", "csv"}:
        print(f"unknown format in {args.format!r}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = _load(args)
        if args.command == "run":
            paths = emit_report(run_experiment(cfg, args.deterministic, args.jobs), args.out_dir, formats)
        elif args.command == "bound":
            paths = emit_report(run_bounds(cfg, args.jobs), args.out_dir, formats)
        elif args.command == "bench":
            table = bench(cfg, args.repeats, args.deterministic)
            paths = emit_table(table, BENCH_HEADER, args.out_dir, "bench", formats)
        else:
            table = sweep(cfg, args.deterministic, args.jobs)
            paths = emit_table(table, SWEEP_HEADER, args.out_dir, "sweep", formats)
    except ValidationError as exc:
        _report_validation(exc)
        return EXIT_INVALID
    except (OSError, TensorFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CapacityError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
