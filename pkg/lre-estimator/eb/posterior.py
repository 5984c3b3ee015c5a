"""
Empirical-Bayes posteriors of the site random effects.

Given ML variance components, the posterior mean of a site's random effects
is the reliability-weighted residual ``Lambda_j (u_j - X_j beta)`` with
``Lambda_j = T (T + V_j)^{-1}``; the posterior covariance is
``(I - Lambda_j) T``. The Step-1 intercept is the scalar case.
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from lmm.design import build_design
from lmm.fit import RandomInterceptFit, RandomSlopeFit
from lmm.likelihood import MarginalModel, as_stats_arrays
from trial_data.models import SiteSufficientStats
from trial_data.summary import StatsArrays
from utils.errors import DomainError
from utils.logging import get_logger

logger = get_logger(__name__)

SINGULAR_TOLERANCE = 1e-300


@dataclass(frozen=True)
class EbIntercept:
    """Step-1 posterior of a site's control-mean random effect.

    Attributes:
        site_id (str): Site identifier.
        eta0_star (float): Posterior mean of eta0j.
        post_var (float): Posterior variance, ``omega00 * (1 - lambda0)``.
        lambda0 (float): Reliability of the site's control mean.
    """

    site_id: str
    eta0_star: float
    post_var: float
    lambda0: float


@dataclass(frozen=True)
class EbSlope:
    """Posterior of a site's treatment-slope random effect (its LRE).

    Attributes:
        site_id (str): Site identifier.
        v1_star (float): Posterior mean of v1j.
        post_var (float): Posterior variance, clamped below at 0.
        lambda_matrix (np.ndarray): 2x2 reliability matrix of the site.
        clamped (bool): Whether the raw posterior variance was negative.
    """

    site_id: str
    v1_star: float
    post_var: float
    lambda_matrix: np.ndarray
    clamped: bool = False

    @property
    def lambda11(self) -> float:
        return float(self.lambda_matrix[1, 1])


@dataclass(frozen=True)
class InterceptPosteriors:
    """Column form of the Step-1 posteriors for all sites."""

    site_ids: tuple[str, ...]
    eta0_star: np.ndarray
    post_var: np.ndarray
    lambda0: np.ndarray

    def records(self) -> list[EbIntercept]:
        return [
            EbIntercept(site_id, float(e), float(v), float(lam))
            for site_id, e, v, lam in zip(
                self.site_ids, self.eta0_star, self.post_var, self.lambda0, strict=True
            )
        ]


@dataclass(frozen=True)
class SlopePosteriors:
    """Column form of the random-effect posteriors for all sites.

    Attributes:
        site_ids (tuple[str, ...]): Site identifiers.
        means (np.ndarray): Posterior means of (v0j, v1j), shape (J, 2).
        covariances (np.ndarray): Raw posterior covariances, shape (J, 2, 2).
        lambdas (np.ndarray): Reliability matrices, shape (J, 2, 2).
    """

    site_ids: tuple[str, ...]
    means: np.ndarray
    covariances: np.ndarray
    lambdas: np.ndarray

    @property
    def v1_star(self) -> np.ndarray:
        return self.means[:, 1]

    @property
    def raw_post_var(self) -> np.ndarray:
        return self.covariances[:, 1, 1]

    @property
    def post_var(self) -> np.ndarray:
        return np.maximum(self.raw_post_var, 0.0)

    @property
    def clamped(self) -> np.ndarray:
        return self.raw_post_var < 0

    @property
    def lambda11(self) -> np.ndarray:
        return self.lambdas[:, 1, 1]

    def records(self) -> list[EbSlope]:
        clamped = self.clamped
        post_var = self.post_var
        return [
            EbSlope(
                site_id=site_id,
                v1_star=float(self.means[j, 1]),
                post_var=float(post_var[j]),
                lambda_matrix=self.lambdas[j].copy(),
                clamped=bool(clamped[j]),
            )
            for j, site_id in enumerate(self.site_ids)
        ]


def reliability_intercept(omega00: float, sigma0_sq: float, n0: float) -> float:
    """Reliability ``omega00 / (omega00 + sigma0_sq / n0)`` of a control mean.

    Example:
        >>> reliability_intercept(1.0, 1.0, 1)
        0.5
    """
    if omega00 <= 0:
        return 0.0
    return omega00 / (omega00 + sigma0_sq / n0)


def posterior_intercepts(
    stats: list[SiteSufficientStats] | StatsArrays,
    fit: RandomInterceptFit,
    phi_x: np.ndarray,
) -> InterceptPosteriors:
    """Step-1 posteriors for every site at once.

    ``eta0_star = lambda0 * (ybar0 - alpha00 - alpha01 . Phi_Xj)`` and
    ``post_var = omega00 * (1 - lambda0)``.
    """
    arrays = as_stats_arrays(stats)
    if fit.omega00 <= 0:
        lambda0 = np.zeros(arrays.J)
    else:
        lambda0 = fit.omega00 / (fit.omega00 + fit.sigma0_sq / arrays.n0)
    residual = arrays.ybar0 - fit.fitted_means(phi_x)
    return InterceptPosteriors(
        site_ids=arrays.site_ids,
        eta0_star=lambda0 * residual,
        post_var=fit.omega00 * (1.0 - lambda0),
        lambda0=lambda0,
    )


def posterior_intercept(
    stats: SiteSufficientStats, fit: RandomInterceptFit, phi_x: Sequence[float]
) -> EbIntercept:
    """Step-1 posterior of one site's control-mean random effect.

    Args:
        stats (SiteSufficientStats): The site's statistics.
        fit (RandomInterceptFit): Step-1 fit.
        phi_x (Sequence[float]): The site's covariates, aligned with
            ``fit.alpha01``.

    Returns:
        EbIntercept: Posterior mean, variance and reliability.
    """
    phi = np.asarray(phi_x, dtype=float).reshape(1, len(fit.alpha01))
    table = posterior_intercepts([stats], fit, phi)
    return table.records()[0]


def _reliability_matrices(
    T: np.ndarray, covariances: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """``T (T + V_j)^{-1}`` by direct 2x2 inversion, for a (J, 2, 2) stack."""
    a = covariances[:, 0, 0]
    b = covariances[:, 0, 1]
    c = covariances[:, 1, 0]
    d = covariances[:, 1, 1]
    det = a * d - b * c
    if np.any(np.abs(det) <= SINGULAR_TOLERANCE):
        msg = "T + V_j is singular; residual variances must be positive"
        raise DomainError(msg)
    inverse = np.empty_like(covariances)
    inverse[:, 0, 0] = d / det
    inverse[:, 0, 1] = -b / det
    inverse[:, 1, 0] = -c / det
    inverse[:, 1, 1] = a / det
    return np.einsum("kl,jlm->jkm", T, inverse), inverse


def reliability_matrix(
    T: np.ndarray, sigma0_sq: float, sigma1_sq: float, n0: float, n1: float
) -> np.ndarray:
    """Reliability matrix ``Lambda_j = T (T + V_j)^{-1}`` of one site.

    ``V_j`` is the sampling covariance of (ybar0, ybar1 - ybar0):
    ``[[s0/n0, -s0/n0], [-s0/n0, s1/n1 + s0/n0]]``.

    Raises:
        DomainError: If ``T + V_j`` is singular.

    Example:
        >>> lam = reliability_matrix(np.diag([0.0, 400.0]), 1.0, 33500.0, 1e6, 100)
        >>> round(lam[1, 1], 3)
        0.544
    """
    T = np.asarray(T, dtype=float)
    v = sigma0_sq / n0
    V = np.array([[v, -v], [-v, sigma1_sq / n1 + v]])
    lambdas, _ = _reliability_matrices(T, (T + V)[np.newaxis, :, :])
    return lambdas[0]


def posterior_random_effects(
    stats: list[SiteSufficientStats] | StatsArrays,
    fit: RandomSlopeFit,
    design: np.ndarray,
) -> SlopePosteriors:
    """Posterior means and covariances of (v0j, v1j) for any random-slope fit.

    Args:
        stats (list[SiteSufficientStats] | StatsArrays): Per-site statistics.
        fit (RandomSlopeFit): A fitted random-slope model.
        design (np.ndarray): The (J, q) site design the fit was made with.

    Returns:
        SlopePosteriors: Posterior means ``Lambda_j r_j``, raw covariances
            ``(I - Lambda_j) T`` and the reliability matrices.
    """
    arrays = as_stats_arrays(stats)
    model = MarginalModel.random_slope(arrays, design)
    covariances = model.covariance(fit.T, fit.sigma0_sq, fit.sigma1_sq)
    lambdas, _ = _reliability_matrices(fit.T, covariances)

    residual = model.u - fit.fitted_means(design)
    means = np.einsum("jkl,jl->jk", lambdas, residual)
    identity = np.eye(2)[np.newaxis, :, :]
    posterior_cov = np.einsum("jkl,lm->jkm", identity - lambdas, fit.T)
    return SlopePosteriors(
        site_ids=arrays.site_ids,
        means=means,
        covariances=posterior_cov,
        lambdas=lambdas,
    )


def posterior_slopes(
    stats: list[SiteSufficientStats] | StatsArrays,
    fit: RandomSlopeFit,
    step_one: InterceptPosteriors | None,
    phi_x: np.ndarray | None,
    covariate_names: Sequence[str] | None = None,
) -> SlopePosteriors:
    """Step-2 posteriors for every site, rebuilding the fit's design.

    The posterior mean uses both reliability terms,
    ``v1_star = lambda10 * r0 + lambda11 * r1``, and the variance is
    ``-lambda10 * tau10 + (1 - lambda11) * tau11``. Negative variances are
    kept in ``raw_post_var`` and clamped in ``post_var``.
    """
    arrays = as_stats_arrays(stats)
    eta = step_one.eta0_star if (fit.has_eta and step_one is not None) else None
    if fit.has_eta and eta is None:
        msg = "This fit adjusts for eta0_star; Step-1 posteriors are required"
        raise DomainError(msg)
    design, _ = build_design(phi_x, arrays.J, covariate_names, eta)
    posteriors = posterior_random_effects(arrays, fit, design)

    n_clamped = int(posteriors.clamped.sum())
    if n_clamped:
        logger.warning(
            f"Posterior slope variance was negative and clamped to 0 at "
            f"{n_clamped} of {arrays.J} sites (tau01={fit.tau01:.4g})"
        )
    return posteriors


def posterior_slope(
    stats: SiteSufficientStats,
    fit: RandomSlopeFit,
    eb0: EbIntercept | None,
    phi_x: Sequence[float],
) -> EbSlope:
    """Step-2 posterior of one site's LRE random effect.

    Args:
        stats (SiteSufficientStats): The site's statistics.
        fit (RandomSlopeFit): Step-2 fit.
        eb0 (EbIntercept | None): The site's Step-1 posterior; required when
            the fit adjusts for eta0_star.
        phi_x (Sequence[float]): The site's covariates.

    Returns:
        EbSlope: Posterior mean, clamped variance and reliability matrix.
    """
    phi = np.asarray(phi_x, dtype=float).reshape(1, -1) if len(phi_x) else None
    step_one = None
    if eb0 is not None:
        step_one = InterceptPosteriors(
            site_ids=(eb0.site_id,),
            eta0_star=np.array([eb0.eta0_star]),
            post_var=np.array([eb0.post_var]),
            lambda0=np.array([eb0.lambda0]),
        )
    return posterior_slopes([stats], fit, step_one, phi).records()[0]
