"""
Evaluation criteria for LRE estimates collected over Monte Carlo replications.

Estimates arrive as an (R, J) array per strategy, in outcome units, together
with the cell's fixed true LRE values (J,) and the scaling unit sigma. Bias
and RMSE are reported in sigma units, empirical variances in sigma-squared
units.
"""

from collections.abc import Mapping
from dataclasses import asdict, dataclass

import numpy as np

from metrics.tiers import classification_rates, classify_tiers
from utils.errors import DomainError
from utils.logging import get_logger

logger = get_logger(__name__)

REFERENCE_STRATEGY = "ITT"


@dataclass(frozen=True)
class CellSummary:
    """Aggregated criteria for one strategy in one study cell.

    Attributes:
        strategy (str): Strategy identifier.
        mean_bias (float): Mean over sites of per-site bias, sigma units.
        sd_bias (float | None): Sample SD over sites of per-site bias; None
            when fewer than two replications were run.
        avg_emp_var (float): Mean over sites of the across-replication
            variance of the estimate, sigma-squared units.
        variance_ratio (float | None): ``avg_emp_var`` relative to the ITT
            strategy; None when the ITT variance is zero, as with a single
            replication.
        avg_rmse (float): Mean over sites of per-site RMSE, sigma units.
        rmse_reduction (float): ``1 - avg_rmse / avg_rmse(ITT)``.
        sce_rate (float): Severe classification error rate.
        mce_rate (float): Moderate classification error rate.
        replications (int): Number of replications aggregated.
        nonconverged (int): Replications whose fit did not converge.
    """

    strategy: str
    mean_bias: float
    sd_bias: float | None
    avg_emp_var: float
    variance_ratio: float | None
    avg_rmse: float
    rmse_reduction: float
    sce_rate: float
    mce_rate: float
    replications: int
    nonconverged: int = 0

    def to_row(self) -> dict[str, object]:
        return asdict(self)


def _as_replications(estimates: np.ndarray, theta: np.ndarray) -> np.ndarray:
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    if estimates.shape[1] != np.asarray(theta).shape[0]:
        msg = (
            f"Estimates cover {estimates.shape[1]} sites but truth covers "
            f"{np.asarray(theta).shape[0]}"
        )
        raise DomainError(msg)
    return estimates


def site_bias(estimates: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Per-site bias: replication mean of the estimate minus the true LRE."""
    estimates = _as_replications(estimates, theta)
    return estimates.mean(axis=0) - np.asarray(theta, dtype=float)


def empirical_variance(estimates: np.ndarray) -> np.ndarray:
    """Per-site variance of the estimates across replications (ddof=0)."""
    return np.atleast_2d(np.asarray(estimates, dtype=float)).var(axis=0)


def site_rmse(estimates: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Per-site RMSE, ``sqrt(empirical variance + bias**2)``, outcome units."""
    bias = site_bias(estimates, theta)
    return np.sqrt(empirical_variance(estimates) + bias**2)


def bias_stats(
    estimates: np.ndarray, theta: np.ndarray, sigma: float = 1.0
) -> tuple[float, float | None]:
    """Mean and standard deviation across sites of per-site bias.

    Args:
        estimates (np.ndarray): Estimates over replications, shape (R, J).
        theta (np.ndarray): True LRE per site, shape (J,), fixed across
            replications.
        sigma (float): Scaling unit; results are divided by it.

    Returns:
        tuple[float, float | None]: ``(mean_bias, sd_bias)`` in sigma units.
            The SD is the sample SD over sites (ddof=1) and is None when
            fewer than two replications were given.

    Example:
        >>> bias_stats(np.array([[1.0, -1.0], [1.0, -1.0]]), np.zeros(2))
        (0.0, 1.4142135623730951)
    """
    estimates = _as_replications(estimates, theta)
    bias = site_bias(estimates, theta) / sigma
    mean_bias = float(bias.mean())
    if estimates.shape[0] < 2:  # noqa: PLR2004
        return mean_bias, None
    return mean_bias, float(bias.std(ddof=1))


@dataclass(frozen=True)
class RmseSummary:
    """Average RMSE of one strategy and its reduction relative to ITT."""

    avg_rmse: float
    rmse_reduction: float


def rmse_summary(
    estimates_by_strategy: Mapping[str, np.ndarray],
    theta: np.ndarray,
    sigma: float = 1.0,
    reference: str = REFERENCE_STRATEGY,
) -> dict[str, RmseSummary]:
    """Average RMSE per strategy and percent reduction against the reference.

    Args:
        estimates_by_strategy (Mapping[str, np.ndarray]): (R, J) estimates
            keyed by strategy; must include ``reference``.
        theta (np.ndarray): True LRE per site.
        sigma (float): Scaling unit.
        reference (str): Strategy the reduction is measured against.

    Returns:
        dict[str, RmseSummary]: One entry per strategy, in input order.

    Raises:
        DomainError: If the reference strategy is missing.
    """
    if reference not in estimates_by_strategy:
        msg = f"RMSE reduction needs the '{reference}' estimates as reference"
        raise DomainError(msg)

    averages = {
        name: float(site_rmse(est, theta).mean() / sigma)
        for name, est in estimates_by_strategy.items()
    }
    base = averages[reference]
    return {
        name: RmseSummary(
            avg_rmse=value,
            rmse_reduction=0.0 if name == reference else 1.0 - value / base,
        )
        for name, value in averages.items()
    }


def tier_rates(estimates: np.ndarray, true_tiers: np.ndarray) -> tuple[float, float]:
    """SCE and MCE rates with tiers recomputed for every replication."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    estimated_tiers = np.vstack([classify_tiers(row) for row in estimates])
    return classification_rates(estimated_tiers, true_tiers)


def summarize_cell(
    estimates_by_strategy: Mapping[str, np.ndarray],
    theta: np.ndarray,
    true_tiers: np.ndarray,
    sigma: float,
    nonconverged: Mapping[str, int] | None = None,
    reference: str = REFERENCE_STRATEGY,
) -> list[CellSummary]:
    """Aggregate every strategy's replications into :class:`CellSummary` rows.

    Args:
        estimates_by_strategy (Mapping[str, np.ndarray]): (R, J) estimates
            keyed by strategy id; must include the reference strategy.
        theta (np.ndarray): True LRE per site.
        true_tiers (np.ndarray): Tiers of ``theta``.
        sigma (float): Scaling unit of the cell.
        nonconverged (Mapping[str, int] | None): Non-converged replication
            counts per strategy.
        reference (str): Strategy that variance ratio and RMSE reduction are
            measured against.

    Returns:
        list[CellSummary]: One row per strategy, in input order.
    """
    nonconverged = nonconverged or {}
    rmse = rmse_summary(estimates_by_strategy, theta, sigma, reference)
    reference_var = float(
        empirical_variance(estimates_by_strategy[reference]).mean() / sigma**2
    )
    if reference_var <= 0:
        logger.debug(f"{reference} estimates do not vary; no variance ratios")

    rows = []
    for name, estimates in estimates_by_strategy.items():
        estimates = _as_replications(estimates, theta)
        mean_bias, sd_bias = bias_stats(estimates, theta, sigma)
        avg_var = float(empirical_variance(estimates).mean() / sigma**2)
        if reference_var <= 0:
            ratio = None
        elif name == reference:
            ratio = 1.0
        else:
            ratio = avg_var / reference_var
        sce, mce = tier_rates(estimates, true_tiers)
        rows.append(
            CellSummary(
                strategy=name,
                mean_bias=mean_bias,
                sd_bias=sd_bias,
                avg_emp_var=avg_var,
                variance_ratio=ratio,
                avg_rmse=rmse[name].avg_rmse,
                rmse_reduction=rmse[name].rmse_reduction,
                sce_rate=sce,
                mce_rate=mce,
                replications=estimates.shape[0],
                nonconverged=int(nonconverged.get(name, 0)),
            )
        )
    logger.debug(f"Summarized {len(rows)} strategies over {rows[0].replications} reps")
    return rows
