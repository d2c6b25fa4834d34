#!/usr/bin/env python3
"""
Command-line front end
pclf-mpc {build-sets,certify,table1,figures,sres,all} [--config PATH] [--out DIR] [--seed N] [--jobs N] [--no-cache]
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from commands import (all_impl, build_sets_impl, certify_impl, figures_impl, sres_impl, table1_impl)
from config import RuntimeSettings, resolve_config
from errors import ConfigError, PclfError
from models import init_database

PROG = "pclf-mpc"
SUBCOMMANDS = ("build-sets", "certify", "table1", "figures", "sres", "all")


class DiagnosticParser(argparse.ArgumentParser):
    """Usage errors as a single `pclf-mpc: error[usage]: ...` line"""

    def error(self, message):
        print(f"{PROG}: error[usage]: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    common = DiagnosticParser(add_help=False)
    common.add_argument("--config", default="example1",
                        help="config file, or a bundled example name (example1, example2)")
    common.add_argument("--out", default=None, help="output directory (default: PCLF_OUTPUT_DIR or results)")
    common.add_argument("--seed", type=int, default=None, help="master seed (default: SEED from the config)")
    common.add_argument("--jobs", type=int, default=None, help="worker processes (default: PCLF_JOBS or 1)")
    common.add_argument("--no-cache", action="store_true", help="rebuild sets and refresh the cache entry")

    parser = DiagnosticParser(prog=PROG, description="PCLF-based MPC experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "build-sets": "compute 𝒳∞, the Riccati terminal set and 𝒳_N",
        "certify": "certificate constants and the β* level table",
        "table1": "closed-loop cost ratios against the long-horizon optimum",
        "figures": "SVG drawing of the four sets",
        "sres": "perturbed closed-loop sweep for MPC 1",
        "all": "every subcommand in order",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _configure_logging(level: str):
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def run(argv: Optional[List[str]] = None) -> int:
    """Exit code: 0 on success, 2 for configuration errors, 1 for any other failure"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 2

    try:
        settings = RuntimeSettings.from_env()
        _configure_logging(settings.log_level)
        config = resolve_config(args.config)
        out = args.out or config.output_dir or settings.output_dir
        jobs = max(1, args.jobs if args.jobs is not None else settings.jobs)
        use_cache = not args.no_cache
        os.makedirs(out, exist_ok=True)
        init_database(settings.cache_url or f"sqlite:///{os.path.abspath(os.path.join(out, 'cache.db'))}",
                      quiet=True)

        print(f"🔧 {PROG} {args.command}: {config.name} → {out}")
        if args.command == "build-sets":
            lines = [build_sets_impl(config, out, jobs, use_cache)]
        elif args.command == "certify":
            lines = [certify_impl(config, out, jobs, use_cache)]
        elif args.command == "table1":
            lines = [table1_impl(config, out, args.seed, jobs, use_cache)]
        elif args.command == "figures":
            lines = [figures_impl(config, out, jobs, use_cache)]
        elif args.command == "sres":
            lines = [sres_impl(config, out, args.seed, jobs, use_cache)]
        else:
            lines = all_impl(config, out, args.seed, jobs, use_cache)
        for line in lines:
            print(line)
        return 0
    except ConfigError as exc:
        print(f"{PROG}: error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except PclfError as exc:
        print(f"{PROG}: error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"{PROG}: error[value]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{PROG}: error[io]: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
