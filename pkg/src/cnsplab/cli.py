"""Command-line front end.

    cnsplab run <config-file> [--set section.key=value ...] [--out DIR]
                              [--threads N]
    cnsplab --list-experiments

Exit codes: 0 all enabled checks pass, 1 check failure, 2 configuration
error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, parse_config


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cnsplab",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("--list-experiments", action="store_true",
                    help="print the available experiments and exit")
    sub = ap.add_subparsers(dest="command")
    runp = sub.add_parser("run", help="run an experiment from a config file")
    runp.add_argument("config", help="key-value config file (section.key = value)")
    runp.add_argument("--set", action="append", default=[], metavar="K=V",
                      help="override a config entry, e.g. --set params.kappa=0")
    runp.add_argument("--out", default=None, metavar="DIR",
                      help="output directory (default: output.directory)")
    runp.add_argument("--threads", type=int, default=1,
                      help="worker threads for embarrassingly parallel probes")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_experiments:
        for name in EXPERIMENTS:
            print(name)
        return 0
    if args.command != "run":
        build_parser().print_help()
        return 2
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, overrides=args.set)
    except ConfigError as exc:
        print("configuration errors:", file=sys.stderr)
        for err in exc.errors:
            print(f"  {err}", file=sys.stderr)
        return 2
    out_dir = args.out if args.out is not None else cfg.output_directory
    from .experiments import run_experiment
    return run_experiment(cfg, out_dir, threads=max(1, args.threads))


if __name__ == "__main__":
    raise SystemExit(main())
