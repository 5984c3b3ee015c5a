"""
30/40/30 tier classification and classification-error rates.

Sites are ranked on their (true or estimated) LRE; the bottom 30% are tier 1,
the top 30% tier 3, the rest tier 2. With J not divisible by 10 both extreme
tiers get ``floor(0.3 * J)`` sites and the middle absorbs the remainder.
"""

from enum import IntEnum

import numpy as np

from utils.errors import DomainError

TIER_SHARE = 0.3
MIN_SITES_FOR_TIERS = 3
SEVERE_SQUARED_GAP = 4
MODERATE_SQUARED_GAP = 1


class TierLabel(IntEnum):
    UNCLASSIFIED = 0
    LOW = 1
    MEDIUM = 2
    HIGH = 3


def tier_sizes(n_sites: int) -> tuple[int, int, int]:
    """Return (low, medium, high) tier sizes for ``n_sites`` sites."""
    extreme = int(np.floor(TIER_SHARE * n_sites + 1e-9))
    return extreme, n_sites - 2 * extreme, extreme


def classify_tiers(points: np.ndarray) -> np.ndarray:
    """Assign each site a tier from its rank.

    Ties are broken by site index (a stable sort), so equal values still
    produce the fixed tier sizes deterministically.

    Args:
        points (np.ndarray): Per-site values, shape (J,).

    Returns:
        np.ndarray: Integer tiers in {1, 2, 3}, shape (J,).

    Raises:
        DomainError: If fewer than three sites are given.

    Example:
        >>> classify_tiers(np.arange(10.0))
        array([1, 1, 1, 2, 2, 2, 2, 3, 3, 3])
    """
    points = np.asarray(points, dtype=float)
    n_sites = points.shape[0]
    if n_sites < MIN_SITES_FOR_TIERS:
        msg = f"Tier classification needs at least {MIN_SITES_FOR_TIERS} sites"
        raise DomainError(msg)

    low, _, high = tier_sizes(n_sites)
    order = np.argsort(points, kind="stable")
    tiers = np.full(n_sites, int(TierLabel.MEDIUM), dtype=np.int64)
    tiers[order[:low]] = int(TierLabel.LOW)
    tiers[order[n_sites - high :]] = int(TierLabel.HIGH)
    return tiers


def classification_rates(
    estimated_tiers: np.ndarray, true_tiers: np.ndarray
) -> tuple[float, float]:
    """Severe and moderate classification error rates.

    A severe error puts a site two tiers away from its true tier (squared gap
    4), a moderate error one tier away (squared gap 1). Indicators are
    averaged over replications first, then over sites.

    Args:
        estimated_tiers (np.ndarray): Shape (J,) or (R, J).
        true_tiers (np.ndarray): Shape (J,).

    Returns:
        tuple[float, float]: (sce_rate, mce_rate).
    """
    estimated = np.atleast_2d(np.asarray(estimated_tiers, dtype=np.int64))
    truth = np.asarray(true_tiers, dtype=np.int64)
    if estimated.shape[1] != truth.shape[0]:
        msg = "Estimated and true tiers must cover the same sites"
        raise DomainError(msg)

    squared_gap = (estimated - truth[np.newaxis, :]) ** 2
    sce_per_site = (squared_gap == SEVERE_SQUARED_GAP).mean(axis=0)
    mce_per_site = (squared_gap == MODERATE_SQUARED_GAP).mean(axis=0)
    return float(sce_per_site.mean()), float(mce_per_site.mean())
