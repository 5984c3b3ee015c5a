#!/usr/bin/env python3
"""
LRE Estimator - Main Entry Point

Command-line surface of the multisite local relative effectiveness (LRE)
estimator. It parses arguments, loads the YAML configuration, sets up
logging and dispatches to one of the subcommands:

- ``simulate``: write a synthetic trial and its truth.
- ``fit``: estimate per-site LRE from CSV files.
- ``study``: run the Monte Carlo study.
- ``report``: print a study summary as text tables.
- ``consistency``: run the bias-versus-size grid.

Example:
    Fit the two-step strategy to a simulated trial::

        $ python main.py simulate --scenario 1 --seed 7 --out sim
        $ python main.py fit --data sim/data.csv --sites sim/sites.csv --out fit

    Smoke-test the study::

        $ python main.py study --replications 1 --psi 0 --out smoke

Exit status:
    0 on success, 1 on a data or estimation error, 2 on a usage error.
"""

import argparse
import sys
from pathlib import Path

from commands import (
    setup_consistency_commands,
    setup_fit_commands,
    setup_report_commands,
    setup_simulate_commands,
    setup_study_commands,
)
from commands.common import CommandContext
from lmm.settings import EstimationSettings
from utils.config import get_section, load_config
from utils.errors import LreError, UsageError
from utils.logging import get_logger, setup_logging

EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_INTERRUPTED = 130


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lre-estimator",
        description="Multisite trial LRE estimation and simulation",
    )
    parser.add_argument(
        "--env",
        choices=["dev", "prod"],
        help="Logging environment (dev or prod); defaults to the config or dev",
    )
    parser.add_argument(
        "--config",
        help="Path to configuration file (default: settings/lre.yml if present)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    setup_simulate_commands(subparsers)
    setup_fit_commands(subparsers)
    setup_study_commands(subparsers)
    setup_report_commands(subparsers)
    setup_consistency_commands(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Run one subcommand and return its exit status.

    Args:
        argv (list[str] | None): Arguments without the program name; None
            reads ``sys.argv``.

    Returns:
        int: 0 on success, 1 on an LreError, 2 on a UsageError.
    """
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(argv)

    try:
        config = load_config(args.config)
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LreError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR

    logging_section = config.get("logging") or {}
    environment = args.env or logging_section.get("environment", "dev")
    log_dir = logging_section.get("log_dir")
    setup_logging(environment, Path(log_dir).expanduser() if log_dir else None)
    logger = get_logger(__name__)
    logger.info(f"Running '{args.command}' in '{environment}' environment")

    try:
        estimation = EstimationSettings.from_config(get_section(config, "estimation"))
        context = CommandContext(config=config, estimation=estimation, argv=argv)
        return args.handler(args, context)
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LreError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except KeyboardInterrupt:
        logger.info("Stopped by user (KeyboardInterrupt)")
        print("\nStopped by user", file=sys.stderr)
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
