"""Empirical-Bayes reliabilities and posteriors of the site random effects."""

from eb.output import EB_COLUMNS, eb_frame, write_eb_csv
from eb.posterior import (
    EbIntercept,
    EbSlope,
    InterceptPosteriors,
    SlopePosteriors,
    posterior_intercept,
    posterior_intercepts,
    posterior_random_effects,
    posterior_slope,
    posterior_slopes,
    reliability_intercept,
    reliability_matrix,
)

__all__ = [
    "EB_COLUMNS",
    "EbIntercept",
    "EbSlope",
    "InterceptPosteriors",
    "SlopePosteriors",
    "eb_frame",
    "posterior_intercept",
    "posterior_intercepts",
    "posterior_random_effects",
    "posterior_slope",
    "posterior_slopes",
    "reliability_intercept",
    "reliability_matrix",
    "write_eb_csv",
]
