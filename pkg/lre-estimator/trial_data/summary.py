"""
Per-site sufficient statistics.

Every model in this project whose covariates are site-level collapses
exactly onto per-arm counts, means and within-arm sums of squares, so this
summary is the working unit of the estimation engine.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from trial_data.models import SiteSufficientStats, TrialDataset
from utils.errors import SchemaError
from utils.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class StatsArrays:
    """Column view of a list of :class:`SiteSufficientStats`, one entry per site."""

    site_ids: tuple[str, ...]
    n0: np.ndarray
    n1: np.ndarray
    ybar0: np.ndarray
    ybar1: np.ndarray
    ss0: np.ndarray
    ss1: np.ndarray

    @classmethod
    def from_stats(cls, stats: list[SiteSufficientStats]) -> "StatsArrays":
        return cls(
            site_ids=tuple(s.site_id for s in stats),
            n0=np.array([s.n0 for s in stats], dtype=float),
            n1=np.array([s.n1 for s in stats], dtype=float),
            ybar0=np.array([s.ybar0 for s in stats], dtype=float),
            ybar1=np.array([s.ybar1 for s in stats], dtype=float),
            ss0=np.array([s.ss0 for s in stats], dtype=float),
            ss1=np.array([s.ss1 for s in stats], dtype=float),
        )

    @property
    def J(self) -> int:  # noqa: N802
        return len(self.site_ids)

    @property
    def itt(self) -> np.ndarray:
        return self.ybar1 - self.ybar0


@dataclass(frozen=True)
class ScalingUnit:
    """Average within-site control SD, plus the sites that could not contribute.

    Attributes:
        value (float): The scaling unit sigma in outcome units.
        warnings (tuple[str, ...]): One message per site whose control arm has
            a single record (its SD is counted as 0).
    """

    value: float
    warnings: tuple[str, ...] = ()

    def __float__(self) -> float:
        return self.value


def _grouped_moments(dataset: TrialDataset) -> StatsArrays:
    frame = pd.DataFrame({"site": dataset.site_idx, "z": dataset.z, "y": dataset.y})
    grouped = frame.groupby(["site", "z"], sort=True)["y"]
    moments = pd.DataFrame(
        {
            "n": grouped.count(),
            "mean": grouped.mean(),
            "var": grouped.var(ddof=0),
        }
    ).unstack("z")
    sites = np.arange(dataset.J)
    moments = moments.reindex(sites)

    n0 = moments[("n", 0)].to_numpy(dtype=float)
    n1 = moments[("n", 1)].to_numpy(dtype=float)
    return StatsArrays(
        site_ids=dataset.site_ids,
        n0=n0,
        n1=n1,
        ybar0=moments[("mean", 0)].to_numpy(dtype=float),
        ybar1=moments[("mean", 1)].to_numpy(dtype=float),
        ss0=np.maximum(moments[("var", 0)].to_numpy(dtype=float) * n0, 0.0),
        ss1=np.maximum(moments[("var", 1)].to_numpy(dtype=float) * n1, 0.0),
    )


def summarize_sites(dataset: TrialDataset) -> list[SiteSufficientStats]:
    """Collapse a dataset to per-site, per-arm sufficient statistics.

    Means and variances come from pandas' grouped one-pass (Welford) moments,
    so the result does not depend on record order beyond rounding.

    Args:
        dataset (TrialDataset): A validated dataset (both arms in every site).

    Returns:
        list[SiteSufficientStats]: One entry per site, in site-index order.

    Example:
        >>> stats = summarize_sites(dataset)
        >>> stats[0].ybar1 - stats[0].ybar0  # site 0's ITT estimate
    """
    arrays = _grouped_moments(dataset)
    return [
        SiteSufficientStats(
            site_id=site_id,
            n0=int(arrays.n0[j]),
            n1=int(arrays.n1[j]),
            ybar0=float(arrays.ybar0[j]),
            ybar1=float(arrays.ybar1[j]),
            ss0=float(arrays.ss0[j]),
            ss1=float(arrays.ss1[j]),
        )
        for j, site_id in enumerate(arrays.site_ids)
    ]


def summarize_arrays(dataset: TrialDataset) -> StatsArrays:
    """Column form of :func:`summarize_sites`, without per-site objects."""
    return _grouped_moments(dataset)


def scaling_unit(dataset: TrialDataset) -> ScalingUnit:
    """Average (across sites) within-site SD of control-arm outcomes.

    Effect sizes throughout the project are expressed in units of this value.
    A site with a single control record contributes an SD of 0 and is listed
    in the returned warnings.

    Args:
        dataset (TrialDataset): A validated dataset.

    Returns:
        ScalingUnit: The scaling unit and any per-site warnings.
    """
    stats = summarize_sites(dataset)
    sds = []
    warnings = []
    for s in stats:
        if s.n0 < 2:  # noqa: PLR2004
            warnings.append(
                f"Site '{s.site_id}' has one control record; its SD counts as 0"
            )
            sds.append(0.0)
        else:
            sds.append(float(np.sqrt(s.ss0 / (s.n0 - 1))))
    for message in warnings:
        logger.warning(message)
    return ScalingUnit(value=float(np.mean(sds)), warnings=tuple(warnings))


def control_sample_means(dataset: TrialDataset) -> np.ndarray:
    """Raw control-arm means per site (the noisy Y(0) covariate)."""
    return summarize_arrays(dataset).ybar0


def site_covariate_matrix(
    dataset: TrialDataset, extra: tuple[str, ...] = ()
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Phi_X as a (J, m) matrix with its column names.

    Args:
        dataset (TrialDataset): A validated dataset.
        extra (tuple[str, ...]): Names of extra site covariates to append.

    Returns:
        tuple[np.ndarray, tuple[str, ...]]: The matrix and its column names.

    Raises:
        SchemaError: If an extra covariate is not attached to the dataset.
    """
    missing = [name for name in extra if name not in dataset.extra_site_covariates]
    if missing:
        msg = f"Dataset has no site covariates named {missing}"
        raise SchemaError(msg)
    columns = [dataset.phi_x, *(dataset.extra_site_covariates[n][:, None] for n in extra)]
    return np.hstack(columns), (*dataset.site_covariate_names, *extra)
