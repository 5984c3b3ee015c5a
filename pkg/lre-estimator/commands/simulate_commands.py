"""``simulate``: write a synthetic multisite trial and its ground truth."""

import argparse
from dataclasses import asdict

from commands.common import CommandContext, parse_n_range, write_provenance
from simgen.config import GeneratorConfig
from simgen.generator import generate, generate_consistency_variant
from simgen.truth_io import write_truth
from trial_data.csv_io import write_csv
from utils.config import get_section, merge_settings, resolve_output_dir
from utils.logging import get_logger, log_action

logger = get_logger(__name__)

DATA_FILE = "data.csv"
SITES_FILE = "sites.csv"
TRUTH_FILE = "truth.csv"
TRUTH_SIDECAR = "truth.json"


def generator_config(
    args: argparse.Namespace, context: CommandContext
) -> GeneratorConfig:
    """Flags over the ``generator`` config section over GeneratorConfig defaults."""
    defaults = asdict(GeneratorConfig())
    defaults.pop("treat_prob")
    n_low, n_high = args.n_range if args.n_range else (None, None)
    merged = merge_settings(
        defaults,
        get_section(context.config, "generator"),
        {
            "scenario": args.scenario,
            "J": args.J,
            "n_low": n_low,
            "n_high": n_high,
            "psi_std": args.psi_std,
            "seed": args.seed,
        },
    )
    return GeneratorConfig(**merged)


@log_action("simulate command")
def run_simulate(args: argparse.Namespace, context: CommandContext) -> int:
    config = generator_config(args, context)
    out_dir = resolve_output_dir(args.out, context.config)
    out_dir.mkdir(parents=True, exist_ok=True)

    make = generate_consistency_variant if args.consistency_variant else generate
    dataset, truth = make(config)

    write_csv(dataset, out_dir / DATA_FILE, out_dir / SITES_FILE)
    write_truth(truth, out_dir / TRUTH_FILE)
    write_provenance(
        out_dir,
        "simulate",
        context,
        {
            "generator": asdict(config),
            "consistency_variant": args.consistency_variant,
            "sigma": truth.sigma,
            "truth_metadata": truth.metadata,
            "outputs": [DATA_FILE, SITES_FILE, TRUTH_FILE, TRUTH_SIDECAR],
        },
    )
    logger.info(f"Simulated {dataset.describe()} into {out_dir}")
    return 0


def setup_simulate_commands(subparsers: argparse._SubParsersAction) -> None:
    """Register the ``simulate`` subcommand.

    Args:
        subparsers (argparse._SubParsersAction): The main parser's subparsers.
    """
    parser = subparsers.add_parser(
        "simulate", help="Generate a synthetic trial with known LRE"
    )
    parser.add_argument("--scenario", type=int, choices=(1, 2), help="Scenario")
    parser.add_argument("--J", type=int, help="Number of sites")
    parser.add_argument(
        "--n-range", type=parse_n_range, help="Per-site sample size bounds LO:HI"
    )
    parser.add_argument(
        "--psi-std", type=float, help="Between-site SD of the LRE, sigma units"
    )
    parser.add_argument("--seed", type=int, help="Generator seed")
    parser.add_argument(
        "--consistency-variant",
        action="store_true",
        help="Use unit Y(0) and effect error variances",
    )
    parser.add_argument("--out", help="Output directory")
    parser.set_defaults(handler=run_simulate)
