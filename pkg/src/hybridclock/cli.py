"""Command-line entry point: ``hybridclock <command> <config.json>``."""

from __future__ import annotations

import argparse
import logging
import sys

from .runner import OUTPUT_ENV, ConfigError, load_config, run_experiment

COMMANDS = ("simulate", "analytic", "validate-oracle", "spectrum-check")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridclock",
        description="Monte Carlo and closed-form stability of hybrid coherent/squeezed Ramsey clocks.",
        epilog=f"Set {OUTPUT_ENV} to override the config's output_dir.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON experiment file")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        return run_experiment(cfg, args.command, threads=args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
