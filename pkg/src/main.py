"""
Command-line entry point for ReflectedDiffusion.

Usage:
    python -m src.main simulate --config exp.json --seed 7
    python -m src.main train --seed 7 --set train.steps=500 --workers 4
    python -m src.main sample --seed 7 --set sample.score=exact
    python -m src.main verify --seed 7 --set 'verify.suites=["ergodicity"]'
    python -m src.main rate-study --seed 7 --plot
    python -m src.main kernel-dump --seed 7

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

import argparse
import logging
import sys
from typing import List, Optional

from .experiments.commands import (
    cmd_kernel_dump,
    cmd_rate_study,
    cmd_sample,
    cmd_simulate,
    cmd_train,
    cmd_verify,
)
from .experiments.experiment_config import build_config
from .utils.errors import exit_code_for
from .utils.logging_utils import setup_logging

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "train", "sample", "verify", "rate-study", "kernel-dump")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflected-diffusion",
        description="Reflected-diffusion generative modeling on the unit cube",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default: LOGGING_CONFIG)")
    parser.add_argument("--log-file", default=None, help="Log file ('' disables file logging)")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")
    help_text = {
        "simulate": "Simulate forward reflected paths",
        "train": "Train per-interval score networks",
        "sample": "Generate samples with the learned or exact score",
        "verify": "Run the bound verification suites",
        "rate-study": "Train and sample over several sample sizes",
        "kernel-dump": "Write log-density and score of the exact kernel on a line",
    }
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=help_text[name])
        sub.add_argument("--config", type=str, default=None, help="JSON config file")
        sub.add_argument("--seed", type=int, default=None, help="Experiment seed (required here or in the config)")
        sub.add_argument("--out", type=str, default=None, help="Output directory (default: out)")
        sub.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                         help="Override a config key by dotted path (repeatable)")
        sub.add_argument("--workers", type=int, default=None, help="Parallel workers")
        if name == "train":
            sub.add_argument("--resume", action="store_true", help="Continue from saved interval states")
        if name in ("rate-study", "kernel-dump"):
            sub.add_argument("--plot", action="store_true", help="Also write a PNG figure")
    return parser


def run(args: argparse.Namespace) -> None:
    cfg = build_config(args.config, args.overrides, seed=args.seed, output_dir=args.out, workers=args.workers)
    logger.info(f"Command '{args.command}' | seed={cfg.seed} | config_hash={cfg.config_hash()[:10]}")

    if args.command == "simulate":
        cmd_simulate(cfg)
    elif args.command == "train":
        cmd_train(cfg, resume=args.resume)
    elif args.command == "sample":
        cmd_sample(cfg)
    elif args.command == "verify":
        result = cmd_verify(cfg)
        if not result["all_passed"]:
            logger.warning("Some bound suites did not pass; see reports/bounds.json")
    elif args.command == "rate-study":
        cmd_rate_study(cfg, plot=args.plot)
    elif args.command == "kernel-dump":
        cmd_kernel_dump(cfg, plot=args.plot)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 0

    setup_logging(args.log_level, args.log_file)
    try:
        run(args)
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"✗ {args.command} failed: {type(e).__name__}: {e}", exc_info=code == 1)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
