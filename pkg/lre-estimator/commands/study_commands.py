"""``study``: run the factorial Monte Carlo study."""

import argparse

from commands.common import (
    CommandContext,
    parse_n_range,
    parse_strategies,
    size_override,
)
from harness.config import DEFAULT_SIZE_SETTINGS, StudyConfig
from harness.study import run_study, write_study_outputs
from utils.config import get_section, resolve_output_dir
from utils.logging import get_logger, log_action

logger = get_logger(__name__)


def study_config(args: argparse.Namespace, context: CommandContext) -> StudyConfig:
    size = size_override(args.J, args.n_range, DEFAULT_SIZE_SETTINGS[0])
    sizes = [*(args.size or []), *([size] if size else [])]
    overrides = {
        "scenarios": args.scenario,
        "psi_grid": args.psi,
        "size_settings": sizes or None,
        "replications": args.replications,
        "strategies": parse_strategies(args.strategy),
        "master_seed": args.seed,
        "jobs": args.jobs,
        "keep_per_site": True if args.keep_per_site else None,
    }
    return StudyConfig.from_settings(
        get_section(context.config, "study"), overrides, context.estimation
    )


@log_action("study command")
def run_study_command(args: argparse.Namespace, context: CommandContext) -> int:
    config = study_config(args, context)
    out_dir = resolve_output_dir(args.out, context.config)
    summary = run_study(config, out_dir, resume=args.resume, progress=args.progress)
    summary.provenance["command"] = "study"
    summary.provenance["argv"] = context.argv
    summary.provenance["resumed"] = args.resume
    write_study_outputs(summary, out_dir)

    flagged = [c.cell.key for c in summary.cells if c.flagged]
    if flagged:
        logger.warning(f"{len(flagged)} cell(s) flagged for non-convergence: {flagged}")
    return 0


def setup_study_commands(subparsers: argparse._SubParsersAction) -> None:
    """Register the ``study`` subcommand.

    Flags mirror the keys of the ``study`` config section; repeatable flags
    replace the configured list rather than extending it.
    """
    parser = subparsers.add_parser("study", help="Run the Monte Carlo study")
    parser.add_argument(
        "--scenario", type=int, choices=(1, 2), action="append", help="Scenario"
    )
    parser.add_argument(
        "--psi",
        "--psi-std",
        dest="psi",
        type=float,
        action="append",
        help="Between-site SD of the LRE in sigma units (repeatable)",
    )
    parser.add_argument(
        "--size", action="append", help="Size setting J:LO:HI (repeatable)"
    )
    parser.add_argument("--J", type=int, help="Number of sites of a single size setting")
    parser.add_argument(
        "--n-range", type=parse_n_range, help="Site size bounds LO:HI of that setting"
    )
    parser.add_argument("--replications", type=int, help="Replications per cell")
    parser.add_argument("--strategy", action="append", help="Strategies to report")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--jobs", type=int, help="Worker processes per cell")
    parser.add_argument(
        "--keep-per-site", action="store_true", help="Also write per_site.csv"
    )
    parser.add_argument(
        "--resume", action="store_true", help="Reuse finished cell checkpoints"
    )
    parser.add_argument(
        "--progress", action="store_true", help="Show per-cell progress bars"
    )
    parser.add_argument("--out", help="Output directory")
    parser.set_defaults(handler=run_study_command)
