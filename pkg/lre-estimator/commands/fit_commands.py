"""``fit``: run estimation strategies on a dataset and write per-site LRE."""

import argparse
import json

from commands.common import CommandContext, parse_strategies, write_provenance
from eb.output import write_eb_csv
from simgen.truth_io import load_truth
from strategies.estimate import run_strategy
from strategies.ids import StrategyId
from strategies.output import write_estimates_csv
from trial_data.csv_io import load_csv
from trial_data.summary import scaling_unit, summarize_arrays
from utils.config import resolve_output_dir
from utils.errors import UsageError
from utils.logging import get_logger, log_action

logger = get_logger(__name__)

ESTIMATES_FILE = "estimates.csv"
MODEL_FILE = "model.json"
EB_FILE = "eb_{strategy}.csv"


@log_action("fit command")
def run_fit(args: argparse.Namespace, context: CommandContext) -> int:
    """Fit every requested strategy and write estimates plus model JSON.

    Non-convergence is reported as a warning and in the JSON, never as a
    failing exit status.
    """
    strategies = parse_strategies(args.strategy) or (StrategyId.TWOSTEP,)
    needs_truth = [s.value for s in strategies if s.requires_truth]
    if needs_truth and not args.truth:
        msg = f"Strategy {', '.join(needs_truth)} needs --truth (true site means)"
        raise UsageError(msg)

    dataset = load_csv(args.data, site_covariate_path=args.sites)
    truth = load_truth(args.truth) if args.truth else None
    stats = summarize_arrays(dataset)
    sigma = scaling_unit(dataset)
    logger.info(f"Loaded {dataset.describe()}; sigma={sigma.value:.4f}")

    results = []
    for strategy in strategies:
        result = run_strategy(
            strategy,
            dataset,
            truth if strategy.requires_truth else None,
            context.estimation,
            stats=stats,
        )
        for message in result.warnings:
            logger.warning(f"{strategy.value}: {message}")
        results.append(result)

    out_dir = resolve_output_dir(args.out, context.config)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_estimates_csv(out_dir / ESTIMATES_FILE, results, with_tier=True)
    eb_files = []
    for result in results:
        if result.slopes is not None:
            eb_file = EB_FILE.format(strategy=result.strategy.value.lower())
            write_eb_csv(out_dir / eb_file, result.slopes, result.intercepts)
            eb_files.append(eb_file)
    model = {
        "n_sites": dataset.J,
        "n_records": dataset.n,
        "sigma": sigma.value,
        "sigma_warnings": list(sigma.warnings),
        "converged": all(r.converged for r in results),
        "strategies": [r.fit_dict() for r in results],
    }
    with open(out_dir / MODEL_FILE, "w", encoding="utf-8") as f:
        json.dump(model, f, indent=2)

    write_provenance(
        out_dir,
        "fit",
        context,
        {
            "inputs": {"data": args.data, "sites": args.sites, "truth": args.truth},
            "strategies": [s.value for s in strategies],
            "outputs": [ESTIMATES_FILE, MODEL_FILE, *eb_files],
        },
    )
    if not model["converged"]:
        logger.warning("At least one fit did not converge; see model.json")
    logger.info(f"Wrote {ESTIMATES_FILE} and {MODEL_FILE} to {out_dir}")
    return 0


def setup_fit_commands(subparsers: argparse._SubParsersAction) -> None:
    """Register the ``fit`` subcommand."""
    parser = subparsers.add_parser(
        "fit", help="Estimate per-site LRE from trial CSV files"
    )
    parser.add_argument("--data", required=True, help="Individual-level CSV")
    parser.add_argument("--sites", help="Site-covariate CSV")
    parser.add_argument("--truth", help="Truth CSV (needed by me_adj_x_u)")
    parser.add_argument(
        "--strategy",
        action="append",
        help="Strategy name; repeat or comma-separate for several (default twostep)",
    )
    parser.add_argument("--out", help="Output directory")
    parser.set_defaults(handler=run_fit)
