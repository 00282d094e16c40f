"""Command line entry point for running experiments."""

from __future__ import annotations

import argparse
import sys

from ecosim.harness import EXPERIMENT_KINDS, ConfigError, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecosim",
        description="Run a seeded agent-population experiment and write its artifacts.",
    )
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument(
        "--experiment",
        choices=EXPERIMENT_KINDS,
        help="experiment kind (overrides the config file)",
    )
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--replicates", type=int, help="replicate count override")
    parser.add_argument("--out", help="output directory override")
    parser.add_argument("--workers", type=int, help="worker process count")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            kind=args.experiment,
            seed=args.seed,
            replicates=args.replicates,
            out_dir=args.out,
            workers=args.workers,
        )
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        summary = run_experiment(cfg)
    except (AssertionError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    for key in sorted(summary):
        print(f"{key}: {summary[key]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
