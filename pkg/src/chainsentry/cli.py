"""Command-line pipeline driver.

Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from .errors import ConfigError, DataError, NotFoundError
from .pipeline import (PipelineConfig, STAGES, explain_address, load_config,
                       run_pipeline)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="chainsentry",
        description="Early malicious-address detection from asset-transfer paths",
    )
    parser.add_argument("--config", type=Path, default=None,
                        help="pipeline config JSON (defaults apply when omitted)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker processes for per-address stages")
    parser.add_argument("--out-dir", type=Path, default=Path("run"),
                        help="artifact directory")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, help=f"run the {stage} stage")
    run = sub.add_parser("run", help="run every stage in order")
    run.add_argument("--stages", type=str, default=",".join(STAGES),
                     help="comma-separated stage subset, in order")
    explain = sub.add_parser("explain", help="interpret one address")
    explain.add_argument("address")
    return parser


def _load(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=args.seed)
    return config


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _load(args)
        out_dir = args.out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "run":
            stages = tuple(s.strip() for s in args.stages.split(",") if s.strip())
            run_pipeline(config, out_dir, jobs=args.jobs, stages=stages)
        elif args.command == "explain":
            text = explain_address(config, out_dir, args.address)
            sys.stdout.write(text)
        else:
            run_pipeline(config, out_dir, jobs=args.jobs, stages=(args.command,))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
