"""Command-line entry point.

    simstack run <config> [--seed S] [--out DIR] [--format csv|json]
                          [--modes EE,SE,SS] [--jobs N]
    simstack validate <config>
    simstack count-inversions [--L N]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import ConfigError, load_config, validate_config
from .experiments import emit, run_experiment
from .medium import GeometryDegenerate
from .multiport import NumericsError, count_inversions_s

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simstack",
        description="Multilayer-metasurface link experiments: seeded "
                    "Monte-Carlo sum-rate studies over configurable "
                    "geometries and medium models.")
    parser.add_argument("--version", action="version", version=f"simstack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="output directory (default from config)")
    run.add_argument("--format", choices=("csv", "json"), default=None,
                     help="output format (default from config)")
    run.add_argument("--modes", default=None,
                     help="comma-separated subset of EE,SE,SS (default from config)")
    run.add_argument("--jobs", type=int, default=1,
                     help="worker processes for Monte-Carlo realizations")

    val = sub.add_parser("validate", help="check a config file and report every problem")
    val.add_argument("config", help="path to the experiment config")

    inv = sub.add_parser("count-inversions",
                         help="print the per-layer-count inversion table of the "
                              "recursive cascade channel model")
    inv.add_argument("--L", type=int, default=6, dest="layer_count",
                     help="largest layer count to tabulate (default 6)")
    return parser


def _cmd_run(args) -> int:
    overrides = {"seed": args.seed, "out_format": args.format}
    if args.modes is not None:
        overrides["modes"] = tuple(m.strip().upper() for m in args.modes.split(",") if m.strip())
    if args.out is not None:
        overrides["out_dir"] = args.out
    try:
        cfg = load_config(args.config, **overrides)
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        for err in e.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("config error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        records, notes = run_experiment(cfg, jobs=args.jobs)
    except (NumericsError, GeometryDegenerate) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    if notes:
        print(f"warning: {notes[0]}", file=sys.stderr)
    path = emit(records, cfg, cfg.out_dir)
    print(f"wrote {len(records)} records to {path}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        errors = validate_config(args.config)
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if errors:
        for err in errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print("config ok")
    return EXIT_OK


def _cmd_count_inversions(args) -> int:
    if args.layer_count < 2:
        print("config error: --L must be at least 2", file=sys.stderr)
        return EXIT_CONFIG
    print("L  inversions")
    for layer_count in range(2, args.layer_count + 1):
        print(f"{layer_count}  {count_inversions_s(layer_count)}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "validate":
        return _cmd_validate(args)
    return _cmd_count_inversions(args)


if __name__ == "__main__":
    sys.exit(main())
