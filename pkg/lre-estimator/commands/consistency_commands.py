"""``consistency``: bias of two-step estimates over growing J and site size."""

import argparse

from commands.common import CommandContext, write_provenance
from harness.config import ConsistencyConfig
from harness.consistency import run_consistency_grid, write_consistency_csv
from utils.config import get_section, resolve_output_dir
from utils.logging import get_logger, log_action

logger = get_logger(__name__)

CONSISTENCY_FILE = "consistency.csv"


@log_action("consistency command")
def run_consistency(args: argparse.Namespace, context: CommandContext) -> int:
    config = ConsistencyConfig.from_settings(
        get_section(context.config, "consistency"),
        {
            "J_grid": args.J,
            "nbar_grid": args.nbar,
            "psi_grid": args.psi,
            "scenario": args.scenario,
            "datasets": args.datasets,
            "master_seed": args.seed,
            "max_records": args.max_records,
        },
        context.estimation,
    )
    rows = run_consistency_grid(config)

    out_dir = resolve_output_dir(args.out, context.config)
    write_consistency_csv(rows, out_dir / CONSISTENCY_FILE)
    write_provenance(
        out_dir,
        "consistency",
        context,
        {
            "config": config.to_dict(),
            "skipped": [
                {"J": r.J, "nbar": r.nbar, "psi_std": r.psi_std, "note": r.note}
                for r in rows
                if r.skipped
            ],
            "outputs": [CONSISTENCY_FILE],
        },
    )
    logger.info(f"Wrote {CONSISTENCY_FILE} ({len(rows)} cells) to {out_dir}")
    return 0


def setup_consistency_commands(subparsers: argparse._SubParsersAction) -> None:
    """Register the ``consistency`` subcommand."""
    parser = subparsers.add_parser(
        "consistency", help="Run the bias-versus-size consistency grid"
    )
    parser.add_argument("--J", type=int, action="append", help="Site count (repeatable)")
    parser.add_argument(
        "--nbar", type=int, action="append", help="Mean site size (repeatable)"
    )
    parser.add_argument(
        "--psi",
        "--psi-std",
        dest="psi",
        type=float,
        action="append",
        help="Between-site SD of the LRE in sigma units (repeatable)",
    )
    parser.add_argument("--scenario", type=int, choices=(1, 2), help="Scenario")
    parser.add_argument(
        "--datasets", type=int, help="Datasets averaged per cell (default 1)"
    )
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument(
        "--max-records",
        type=int,
        help="Skip cells expected to exceed this many records",
    )
    parser.add_argument("--out", help="Output directory")
    parser.set_defaults(handler=run_consistency)
