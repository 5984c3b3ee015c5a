"""``report``: render a study's summary.csv as plain-text tables."""

import argparse
import sys
from pathlib import Path

from commands.common import CommandContext, write_provenance
from harness.report import read_summary, render_report
from utils.logging import get_logger, log_action

logger = get_logger(__name__)

REPORT_FILE = "report.txt"
REPORT_PROVENANCE_FILE = "report_provenance.json"


@log_action("report command")
def run_report(args: argparse.Namespace, context: CommandContext) -> int:
    summary_path = Path(args.summary)
    text = render_report(read_summary(summary_path), digits=args.digits)
    sys.stdout.write(text)

    if args.out:
        out_dir = Path(args.out).expanduser()
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / REPORT_FILE).write_text(text, encoding="utf-8")
        write_provenance(
            out_dir,
            "report",
            context,
            {"inputs": {"summary": str(summary_path)}, "outputs": [REPORT_FILE]},
            file_name=REPORT_PROVENANCE_FILE,
        )
        logger.info(f"Wrote {REPORT_FILE} to {out_dir}")
    return 0


def setup_report_commands(subparsers: argparse._SubParsersAction) -> None:
    """Register the ``report`` subcommand."""
    parser = subparsers.add_parser(
        "report", help="Print a study summary as one table per cell"
    )
    parser.add_argument("summary", help="Path to a study's summary.csv")
    parser.add_argument(
        "--digits", type=int, default=4, help="Decimals shown (default 4)"
    )
    parser.add_argument("--out", help="Also write report.txt into this directory")
    parser.set_defaults(handler=run_report)
