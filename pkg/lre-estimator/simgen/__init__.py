"""Synthetic multisite trials with known local relative effectiveness."""

from simgen.config import (
    SCENARIO_MODELS,
    VARIANCE_READING_NOTE,
    GeneratorConfig,
    OutcomeModel,
)
from simgen.generator import (
    SyntheticTruth,
    draw_individuals,
    draw_site_truth,
    generate,
    generate_consistency_variant,
    replication_seed,
)
from simgen.truth_io import load_truth, write_truth

__all__ = [
    "SCENARIO_MODELS",
    "VARIANCE_READING_NOTE",
    "GeneratorConfig",
    "OutcomeModel",
    "SyntheticTruth",
    "draw_individuals",
    "draw_site_truth",
    "generate",
    "generate_consistency_variant",
    "load_truth",
    "replication_seed",
    "write_truth",
]
