"""
Exact identification check on small discrete worlds.

A world is a handful of sites, each with observed site covariates, a
discrete distribution of the control outcome Y(0), the treated mean it would
have without its own relative effectiveness, and its true LRE. Population
quantities are computed exactly with :class:`fractions.Fraction`, so the
identification formula

    site ITT - mean ITT over sites with the same (Phi_X, distribution of Y(0))

can be compared to the constructed LRE without sampling noise.
"""

from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

from utils.errors import SpecificationError
from utils.logging import get_logger

logger = get_logger(__name__)

Number = int | str | Fraction


def _exact(value: Number) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)


@dataclass(frozen=True)
class OracleSite:
    """One site of a discrete identification world.

    Attributes:
        site_id (str): Site identifier.
        phi_x (tuple): Observed site covariates.
        y0_distribution (tuple): ``(value, probability)`` pairs of Y(0).
        treated_baseline (Number): Mean treated outcome net of the site's
            own LRE; sites comparable on X and U share it.
        theta (Number): The site's true LRE.
    """

    site_id: str
    phi_x: tuple[Number, ...]
    y0_distribution: tuple[tuple[Number, Number], ...]
    treated_baseline: Number
    theta: Number

    def control_mean(self) -> Fraction:
        return sum(
            (_exact(v) * _exact(p) for v, p in self.y0_distribution), Fraction(0)
        )

    def treated_mean(self) -> Fraction:
        return _exact(self.treated_baseline) + _exact(self.theta)

    def itt(self) -> Fraction:
        return self.treated_mean() - self.control_mean()

    def comparability_key(self) -> tuple:
        """Exact (Phi_X, distribution of Y(0)) used to match sites."""
        masses: dict[Fraction, Fraction] = defaultdict(Fraction)
        for value, probability in self.y0_distribution:
            masses[_exact(value)] += _exact(probability)
        support = tuple(sorted((v, p) for v, p in masses.items() if p != 0))
        return tuple(_exact(v) for v in self.phi_x), support


@dataclass(frozen=True)
class OracleResidual:
    """Identified LRE of one site and its gap to the constructed LRE.

    A perturbation p of one of m matched sites shows up in ``residual`` as
    ``p * (1 - 1/m)``, not p, since the group mean ITT absorbs ``p / m``.
    """

    site_id: str
    identified: Fraction
    theta: Fraction
    residual: Fraction


def _validate(sites: Sequence[OracleSite]) -> None:
    if not sites:
        msg = "An identification world needs at least one site"
        raise SpecificationError(msg)
    for site in sites:
        probabilities = [_exact(p) for _, p in site.y0_distribution]
        if any(p < 0 for p in probabilities) or sum(probabilities) != 1:
            msg = f"Site '{site.site_id}' Y(0) probabilities must be >= 0 and sum to 1"
            raise SpecificationError(msg)


def oracle_identification_check(world: Sequence[OracleSite]) -> list[OracleResidual]:
    """Evaluate the identification formula exactly on a discrete world.

    Sites are grouped by identical site covariates and Y(0) distribution.
    Each group's LRE values must average 0, the reference value of the
    estimand. Within a group where the treated baselines agree the
    residuals are exactly 0; if one site's treated mean is perturbed by p
    the group's residuals become ``p * (1 - 1/m)`` at that site and
    ``-p / m`` at the others.

    Args:
        world (Sequence[OracleSite]): The constructed sites.

    Returns:
        list[OracleResidual]: One entry per site, in input order.

    Raises:
        SpecificationError: If a group's LRE values do not average 0 or a
            Y(0) distribution is malformed.

    Example:
        >>> pair = [
        ...     OracleSite("a", (1,), ((0, 1),), 10, 5),
        ...     OracleSite("b", (1,), ((0, 1),), 10, -5),
        ... ]
        >>> [r.residual for r in oracle_identification_check(pair)]
        [Fraction(0, 1), Fraction(0, 1)]
    """
    sites = list(world)
    _validate(sites)

    groups: dict[tuple, list[OracleSite]] = defaultdict(list)
    for site in sites:
        groups[site.comparability_key()].append(site)

    group_itt: dict[tuple, Fraction] = {}
    for key, members in groups.items():
        theta_sum = sum((_exact(s.theta) for s in members), Fraction(0))
        if theta_sum != 0:
            names = [s.site_id for s in members]
            msg = f"LRE values of matched sites {names} sum to {theta_sum}, not 0"
            raise SpecificationError(msg)
        group_itt[key] = sum((s.itt() for s in members), Fraction(0)) / len(members)

    results = []
    for site in sites:
        identified = site.itt() - group_itt[site.comparability_key()]
        theta = _exact(site.theta)
        results.append(
            OracleResidual(
                site_id=site.site_id,
                identified=identified,
                theta=theta,
                residual=identified - theta,
            )
        )
    logger.debug(f"Checked identification on {len(sites)} sites in {len(groups)} groups")
    return results
