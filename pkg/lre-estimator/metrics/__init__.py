"""Bias, variance, RMSE and tier-classification criteria."""

from metrics.criteria import (
    REFERENCE_STRATEGY,
    CellSummary,
    RmseSummary,
    bias_stats,
    empirical_variance,
    rmse_summary,
    site_bias,
    site_rmse,
    summarize_cell,
    tier_rates,
)
from metrics.tiers import TierLabel, classification_rates, classify_tiers, tier_sizes

__all__ = [
    "REFERENCE_STRATEGY",
    "CellSummary",
    "RmseSummary",
    "TierLabel",
    "bias_stats",
    "classification_rates",
    "classify_tiers",
    "empirical_variance",
    "rmse_summary",
    "site_bias",
    "site_rmse",
    "summarize_cell",
    "tier_rates",
    "tier_sizes",
]
