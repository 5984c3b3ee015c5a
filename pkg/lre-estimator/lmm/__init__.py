"""Maximum-likelihood two-level mixed models fitted from sufficient statistics."""

from lmm.design import CONSTANT, ETA_COLUMN, build_design, check_rank
from lmm.fit import (
    FitDiagnostics,
    RandomInterceptFit,
    RandomSlopeFit,
    fit_random_intercept,
    fit_random_slope,
)
from lmm.likelihood import (
    MarginalModel,
    ModelParameters,
    gls_fixed_effects,
    marginal_loglik,
)
from lmm.settings import DEFAULT_SETTINGS, EstimationSettings

__all__ = [
    "CONSTANT",
    "DEFAULT_SETTINGS",
    "ETA_COLUMN",
    "EstimationSettings",
    "FitDiagnostics",
    "MarginalModel",
    "ModelParameters",
    "RandomInterceptFit",
    "RandomSlopeFit",
    "build_design",
    "check_rank",
    "fit_random_intercept",
    "fit_random_slope",
    "gls_fixed_effects",
    "marginal_loglik",
]
