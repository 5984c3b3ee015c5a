"""
The seven LRE estimation strategies.

ITT and ITT_ADJ are per-site fixed-effects analyses. The mixed strategies fit
a random intercept and treatment-slope model on the per-site sufficient
statistics with different site-level adjustments, take the empirical-Bayes
posterior mean of each site's slope deviation, and center the result so the
estimated LRE averages 0 across sites:

- ME: no adjustment.
- ME_ADJ_X: observed site covariates Phi_X.
- ME_ADJ_X_Y0: Phi_X and the raw control mean ybar0 (errors in variables).
- TWOSTEP: Step 1 shrinks the control means (random-intercept model on the
  control arm), Step 2 adjusts for Phi_X and the Step-1 posterior means.
- ME_ADJ_X_U: Phi_X and the true site means of U (needs synthetic truth).
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from eb.posterior import (
    InterceptPosteriors,
    SlopePosteriors,
    posterior_intercepts,
    posterior_random_effects,
    posterior_slopes,
)
from lmm.design import build_design
from lmm.fit import (
    RandomInterceptFit,
    RandomSlopeFit,
    fit_random_intercept,
    fit_random_slope,
)
from lmm.settings import DEFAULT_SETTINGS, EstimationSettings
from simgen.generator import SyntheticTruth
from strategies.ids import StrategyId
from trial_data.models import TrialDataset
from trial_data.summary import StatsArrays, summarize_arrays
from utils.errors import UsageError
from utils.logging import get_logger

logger = get_logger(__name__)

Y0_COLUMN = "ybar0"
U_COLUMNS = ("mu_u1", "mu_u2")


@dataclass(frozen=True)
class LreEstimate:
    """One site's LRE estimate under one strategy.

    Attributes:
        site_id (str): Site identifier.
        point (float): Point estimate, outcome units.
        post_var (float | None): Posterior variance; None for ITT and ITT_ADJ.
        strategy (StrategyId): Strategy that produced the estimate.
        warnings (tuple[str, ...]): E.g. a convergence warning of the fit.
    """

    site_id: str
    point: float
    post_var: float | None
    strategy: StrategyId
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class StrategyResult:
    """Everything one strategy run produced, in column form.

    Attributes:
        strategy (StrategyId): The strategy.
        site_ids (tuple[str, ...]): Sites in index order.
        points (np.ndarray): Point estimates, shape (J,).
        post_var (np.ndarray | None): Posterior variances (clamped at 0).
        step_one (RandomInterceptFit | None): TWOSTEP's Step-1 fit.
        model (RandomSlopeFit | None): The random-slope fit.
        intercepts (InterceptPosteriors | None): TWOSTEP's Step-1 posteriors.
        slopes (SlopePosteriors | None): Posteriors behind the points.
        warnings (tuple[str, ...]): Convergence and boundary warnings.
    """

    strategy: StrategyId
    site_ids: tuple[str, ...]
    points: np.ndarray
    post_var: np.ndarray | None = None
    step_one: RandomInterceptFit | None = None
    model: RandomSlopeFit | None = None
    intercepts: InterceptPosteriors | None = None
    slopes: SlopePosteriors | None = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def converged(self) -> bool:
        fits = [f for f in (self.step_one, self.model) if f is not None]
        return all(f.converged for f in fits)

    @property
    def clamped_sites(self) -> int:
        return int(self.slopes.clamped.sum()) if self.slopes is not None else 0

    @property
    def estimates(self) -> list[LreEstimate]:
        post_var = self.post_var
        return [
            LreEstimate(
                site_id=site_id,
                point=float(self.points[j]),
                post_var=None if post_var is None else float(post_var[j]),
                strategy=self.strategy,
                warnings=self.warnings,
            )
            for j, site_id in enumerate(self.site_ids)
        ]

    def fit_dict(self) -> dict[str, Any]:
        """JSON-ready description of the fitted models and warnings."""
        return {
            "strategy": self.strategy.value,
            "converged": self.converged,
            "warnings": list(self.warnings),
            "clamped_posterior_variances": self.clamped_sites,
            "step_one": self.step_one.to_dict() if self.step_one else None,
            "model": self.model.to_dict() if self.model else None,
        }


def _itt(stats: StatsArrays) -> np.ndarray:
    return stats.itt


def _itt_adjusted(dataset: TrialDataset) -> np.ndarray:
    """Per-site OLS of y on (1, z, x); the coefficient on z."""
    if dataset.x.shape[1] == 0:
        return summarize_arrays(dataset).itt

    order = np.argsort(dataset.site_idx, kind="stable")
    bounds = np.searchsorted(dataset.site_idx[order], np.arange(dataset.J + 1))
    points = np.empty(dataset.J)
    for j in range(dataset.J):
        rows = order[bounds[j] : bounds[j + 1]]
        design = np.column_stack(
            [np.ones(rows.shape[0]), dataset.z[rows], dataset.x[rows]]
        )
        coef, _, rank, _ = np.linalg.lstsq(design, dataset.y[rows], rcond=None)
        if rank < design.shape[1]:
            logger.warning(
                f"Site '{dataset.site_ids[j]}' covariate design is rank "
                f"{rank} of {design.shape[1]}; using the minimum-norm solution"
            )
        points[j] = coef[1]
    return points


def _center(values: np.ndarray) -> np.ndarray:
    return values - values.mean()


def _fit_warnings(label: str, fit: RandomInterceptFit | RandomSlopeFit) -> list[str]:
    warnings = []
    if not fit.converged:
        warnings.append(
            f"{label} did not converge ({fit.diagnostics.message}); "
            f"gradient norm {fit.diagnostics.gradient_norm:.2e}"
        )
    warnings.extend(
        f"{label} variance component {name} estimated on the boundary (0)"
        for name in fit.diagnostics.boundary
    )
    return warnings


def _one_step(
    strategy: StrategyId,
    stats: StatsArrays,
    covariates: np.ndarray | None,
    names: tuple[str, ...],
    settings: EstimationSettings,
) -> StrategyResult:
    fit = fit_random_slope(stats, covariates, covariate_names=names, settings=settings)
    design, _ = build_design(covariates, stats.J, names)
    slopes = posterior_random_effects(stats, fit, design)
    warnings = _fit_warnings("Random-slope fit", fit)
    if slopes.clamped.any():
        warnings.append(
            f"Posterior slope variance clamped to 0 at {int(slopes.clamped.sum())} sites"
        )
    return StrategyResult(
        strategy=strategy,
        site_ids=stats.site_ids,
        points=_center(slopes.v1_star),
        post_var=slopes.post_var,
        model=fit,
        slopes=slopes,
        warnings=tuple(warnings),
    )


def _two_step(
    dataset: TrialDataset, stats: StatsArrays, settings: EstimationSettings
) -> StrategyResult:
    names = dataset.site_covariate_names
    step_one = fit_random_intercept(stats, dataset.phi_x, names, settings=settings)
    intercepts = posterior_intercepts(stats, step_one, dataset.phi_x)
    warnings = _fit_warnings("Step-1 fit", step_one)

    eta = intercepts.eta0_star
    if not np.any(eta):
        # omega00 on the boundary: every eta0_star is 0 and adds no column rank
        warnings.append("Step-1 posteriors are all 0; Step 2 omits eta0_star")
        eta = None
    model = fit_random_slope(
        stats, dataset.phi_x, eta0_star=eta, covariate_names=names, settings=settings
    )
    slopes = posterior_slopes(stats, model, intercepts, dataset.phi_x, names)
    warnings.extend(_fit_warnings("Step-2 fit", model))
    if slopes.clamped.any():
        warnings.append(
            f"Posterior slope variance clamped to 0 at {int(slopes.clamped.sum())} sites"
        )
    return StrategyResult(
        strategy=StrategyId.TWOSTEP,
        site_ids=stats.site_ids,
        points=_center(slopes.v1_star),
        post_var=slopes.post_var,
        step_one=step_one,
        model=model,
        intercepts=intercepts,
        slopes=slopes,
        warnings=tuple(warnings),
    )


def _check_truth(
    strategy: StrategyId, dataset: TrialDataset, truth: SyntheticTruth | None
) -> None:
    if strategy.requires_truth and truth is None:
        msg = f"Strategy {strategy.value} adjusts for true site means and needs truth"
        raise UsageError(msg)
    if not strategy.requires_truth and truth is not None:
        msg = f"Feasible strategy {strategy.value} must not be given the truth"
        raise UsageError(msg)
    if truth is not None and tuple(truth.site_ids) != tuple(dataset.site_ids):
        msg = "Truth and dataset list different sites"
        raise UsageError(msg)


def run_strategy(
    strategy: StrategyId | str,
    dataset: TrialDataset,
    truth: SyntheticTruth | None = None,
    settings: EstimationSettings = DEFAULT_SETTINGS,
    stats: StatsArrays | None = None,
) -> StrategyResult:
    """Run one strategy and keep its fits and posteriors.

    Args:
        strategy (StrategyId | str): Strategy identifier.
        dataset (TrialDataset): Validated trial data.
        truth (SyntheticTruth | None): Required by, and only by, ME_ADJ_X_U.
        settings (EstimationSettings): Optimizer tolerances.
        stats (StatsArrays | None): Precomputed sufficient statistics.

    Returns:
        StrategyResult: Points, posterior variances, fits and warnings.

    Raises:
        UsageError: On a strategy/truth mismatch.
    """
    strategy = StrategyId.parse(strategy) if isinstance(strategy, str) else strategy
    _check_truth(strategy, dataset, truth)
    stats = stats if stats is not None else summarize_arrays(dataset)
    phi = dataset.phi_x
    names = dataset.site_covariate_names

    match strategy:
        case StrategyId.ITT:
            return StrategyResult(strategy, stats.site_ids, _itt(stats))
        case StrategyId.ITT_ADJ:
            return StrategyResult(strategy, stats.site_ids, _itt_adjusted(dataset))
        case StrategyId.ME:
            return _one_step(strategy, stats, None, (), settings)
        case StrategyId.ME_ADJ_X:
            return _one_step(strategy, stats, phi, names, settings)
        case StrategyId.ME_ADJ_X_Y0:
            covariates = np.column_stack([phi, stats.ybar0])
            return _one_step(strategy, stats, covariates, (*names, Y0_COLUMN), settings)
        case StrategyId.TWOSTEP:
            return _two_step(dataset, stats, settings)
        case StrategyId.ME_ADJ_X_U:
            covariates = np.column_stack([phi, truth.mu_u])
            return _one_step(strategy, stats, covariates, (*names, *U_COLUMNS), settings)


def estimate_lre(
    strategy: StrategyId | str,
    dataset: TrialDataset,
    truth: SyntheticTruth | None = None,
    settings: EstimationSettings = DEFAULT_SETTINGS,
) -> list[LreEstimate]:
    """Per-site LRE estimates of one strategy.

    Mixed strategies return estimates centered to average 0 across sites,
    with posterior variances; a non-converged fit still returns estimates
    and attaches a warning to each.

    Example:
        >>> estimates = estimate_lre("twostep", dataset)
        >>> estimates[0].point, estimates[0].post_var
    """
    result = run_strategy(strategy, dataset, truth, settings)
    for message in result.warnings:
        logger.warning(f"{result.strategy.value}: {message}")
    return result.estimates
