"""
Exact marginal likelihood of two-level models from per-site sufficient statistics.

Random effects and fixed effects are constant within a site arm, so a site's
individual outcomes enter the likelihood only through its arm means and
within-arm sums of squares. Working in the coordinates ``u_j = (ybar0_j,
ybar1_j - ybar0_j)`` the site contribution is

    log N(u_j; X_j beta, T + V_j)
    + sum over arms of [-(n-1)/2 log(2 pi s2) - log(n)/2 - ss/(2 s2)]

with ``V_j = [[s0/n0, -s0/n0], [-s0/n0, s1/n1 + s0/n0]]``. The random
intercept model keeps only the first coordinate and the control arm. No
n-by-n matrix is ever formed.
"""

from dataclasses import dataclass

import numpy as np

from trial_data.models import SiteSufficientStats
from trial_data.summary import StatsArrays
from utils.errors import DomainError

LOG_2PI = float(np.log(2.0 * np.pi))
PSD_TOLERANCE = 1e-10


def as_stats_arrays(stats: list[SiteSufficientStats] | StatsArrays) -> StatsArrays:
    if isinstance(stats, StatsArrays):
        return stats
    return StatsArrays.from_stats(list(stats))


@dataclass(frozen=True)
class Evaluation:
    """Log-likelihood at one parameter point, with its profiled fixed effects.

    The gradient fields are partial derivatives with respect to the
    covariance entries and the residual variances; they are None unless
    requested.
    """

    loglik: float
    beta: np.ndarray
    grad_T: np.ndarray | None = None
    grad_sigma0_sq: float | None = None
    grad_sigma1_sq: float | None = None


@dataclass(frozen=True, eq=False)
class MarginalModel:
    """Per-site pieces of the collapsed likelihood.

    Attributes:
        u (np.ndarray): Site responses, shape (J, k).
        X (np.ndarray): Fixed-effect design per site, shape (J, k, p).
        d0 (np.ndarray): Derivative of V_j with respect to sigma0^2, (J, k, k).
        d1 (np.ndarray | None): Derivative of V_j with respect to sigma1^2;
            None for the random-intercept model.
        n0, ss0, n1, ss1 (np.ndarray): Arm counts and sums of squares.
    """

    u: np.ndarray
    X: np.ndarray
    d0: np.ndarray
    d1: np.ndarray | None
    n0: np.ndarray
    ss0: np.ndarray
    n1: np.ndarray
    ss1: np.ndarray

    @classmethod
    def random_intercept(
        cls, stats: list[SiteSufficientStats] | StatsArrays, design: np.ndarray
    ) -> "MarginalModel":
        """Control-arm model ``ybar0_j = W_j alpha + eta0_j + error``."""
        arrays = as_stats_arrays(stats)
        n_sites = arrays.J
        return cls(
            u=arrays.ybar0[:, np.newaxis],
            X=np.asarray(design, dtype=float)[:, np.newaxis, :],
            d0=(1.0 / arrays.n0)[:, np.newaxis, np.newaxis],
            d1=None,
            n0=arrays.n0,
            ss0=arrays.ss0,
            n1=np.zeros(n_sites),
            ss1=np.zeros(n_sites),
        )

    @classmethod
    def random_slope(
        cls, stats: list[SiteSufficientStats] | StatsArrays, design: np.ndarray
    ) -> "MarginalModel":
        """Both arms, random intercept and random treatment slope."""
        arrays = as_stats_arrays(stats)
        design = np.asarray(design, dtype=float)
        n_sites, q = design.shape
        X = np.zeros((n_sites, 2, 2 * q))
        X[:, 0, :q] = design
        X[:, 1, q:] = design

        inv0 = 1.0 / arrays.n0
        d0 = np.empty((n_sites, 2, 2))
        d0[:, 0, 0] = inv0
        d0[:, 0, 1] = -inv0
        d0[:, 1, 0] = -inv0
        d0[:, 1, 1] = inv0
        d1 = np.zeros((n_sites, 2, 2))
        d1[:, 1, 1] = 1.0 / arrays.n1
        return cls(
            u=np.column_stack([arrays.ybar0, arrays.ybar1 - arrays.ybar0]),
            X=X,
            d0=d0,
            d1=d1,
            n0=arrays.n0,
            ss0=arrays.ss0,
            n1=arrays.n1,
            ss1=arrays.ss1,
        )

    @property
    def J(self) -> int:  # noqa: N802
        return int(self.u.shape[0])

    @property
    def k(self) -> int:
        return int(self.u.shape[1])

    @property
    def p(self) -> int:
        return int(self.X.shape[2])

    @property
    def has_slope(self) -> bool:
        return self.d1 is not None

    @property
    def n_obs(self) -> int:
        return int(self.n0.sum() + (self.n1.sum() if self.has_slope else 0))

    def covariance(
        self, T: np.ndarray, sigma0_sq: float, sigma1_sq: float | None = None
    ) -> np.ndarray:
        """Marginal covariance ``T + V_j`` of every site's response."""
        C = T[np.newaxis, :, :] + sigma0_sq * self.d0
        if self.d1 is not None:
            C = C + sigma1_sq * self.d1
        return C

    def _arms(self, sigma0_sq: float, sigma1_sq: float | None):
        yield self.n0, self.ss0, sigma0_sq
        if self.has_slope:
            yield self.n1, self.ss1, sigma1_sq

    def within_loglik(self, sigma0_sq: float, sigma1_sq: float | None = None) -> float:
        total = 0.0
        for n, ss, s2 in self._arms(sigma0_sq, sigma1_sq):
            total += float(
                np.sum(
                    -0.5 * (n - 1.0) * (LOG_2PI + np.log(s2))
                    - 0.5 * np.log(n)
                    - ss / (2.0 * s2)
                )
            )
        return total

    def _within_score(self, n: np.ndarray, ss: np.ndarray, s2: float) -> float:
        return float(np.sum(-(n - 1.0) / (2.0 * s2) + ss / (2.0 * s2**2)))

    def gls(self, C_inv: np.ndarray) -> np.ndarray:
        """Generalized least squares fixed effects for given inverse covariances."""
        A = np.einsum("jkp,jkl,jlq->pq", self.X, C_inv, self.X)
        b = np.einsum("jkp,jkl,jl->p", self.X, C_inv, self.u)
        try:
            return np.linalg.solve(A, b)
        except np.linalg.LinAlgError as e:
            msg = "GLS normal equations are singular"
            raise DomainError(msg) from e

    def evaluate(
        self,
        T: np.ndarray,
        sigma0_sq: float,
        sigma1_sq: float | None = None,
        beta: np.ndarray | None = None,
        with_gradient: bool = False,
    ) -> Evaluation:
        """Log-likelihood at (T, sigma^2), profiling beta by GLS unless given.

        When ``beta`` is profiled the gradient with respect to the variance
        parameters needs no beta term, since the GLS solution zeroes the
        fixed-effect score.
        """
        C = self.covariance(T, sigma0_sq, sigma1_sq)
        C_inv = np.linalg.inv(C)
        sign, logdet = np.linalg.slogdet(C)
        if np.any(sign <= 0):
            msg = "Marginal site covariance is not positive definite"
            raise DomainError(msg)
        if beta is None:
            beta = self.gls(C_inv)

        resid = self.u - np.einsum("jkp,p->jk", self.X, beta)
        weighted = np.einsum("jkl,jl->jk", C_inv, resid)
        quad = np.einsum("jk,jk->j", resid, weighted)
        loglik = -0.5 * float(np.sum(self.k * LOG_2PI + logdet + quad))
        loglik += self.within_loglik(sigma0_sq, sigma1_sq)
        if not with_gradient:
            return Evaluation(loglik=loglik, beta=beta)

        G = 0.5 * (np.einsum("jk,jl->jkl", weighted, weighted) - C_inv)
        grad_s0 = float(np.einsum("jkl,jkl->", G, self.d0))
        grad_s0 += self._within_score(self.n0, self.ss0, sigma0_sq)
        grad_s1 = None
        if self.d1 is not None:
            grad_s1 = float(np.einsum("jkl,jkl->", G, self.d1))
            grad_s1 += self._within_score(self.n1, self.ss1, sigma1_sq)
        return Evaluation(
            loglik=loglik,
            beta=beta,
            grad_T=G.sum(axis=0),
            grad_sigma0_sq=grad_s0,
            grad_sigma1_sq=grad_s1,
        )


@dataclass(frozen=True)
class ModelParameters:
    """A full parameter point: covariance of the random effects, residual
    variances and fixed effects.

    ``T`` is 1x1 for the random-intercept model (then ``sigma1_sq`` is
    unused) and 2x2 for the random-slope model, where ``beta`` stacks the
    intercept-part coefficients before the slope-part coefficients.
    """

    T: np.ndarray
    sigma0_sq: float
    beta: np.ndarray
    sigma1_sq: float | None = None

    def validate(self) -> None:
        T = np.atleast_2d(np.asarray(self.T, dtype=float))
        if T.shape not in ((1, 1), (2, 2)):
            msg = f"T must be 1x1 or 2x2; got shape {T.shape}"
            raise DomainError(msg)
        if not np.allclose(T, T.T):
            msg = "T must be symmetric"
            raise DomainError(msg)
        scale = max(1.0, float(np.abs(T).max()))
        if np.linalg.eigvalsh(T).min() < -PSD_TOLERANCE * scale:
            msg = "T must be positive semidefinite"
            raise DomainError(msg)
        if not self.sigma0_sq > 0:
            msg = f"sigma0_sq must be positive; got {self.sigma0_sq}"
            raise DomainError(msg)
        if T.shape == (2, 2) and not (self.sigma1_sq is not None and self.sigma1_sq > 0):
            msg = f"sigma1_sq must be positive; got {self.sigma1_sq}"
            raise DomainError(msg)


def marginal_loglik(
    params: ModelParameters,
    stats: list[SiteSufficientStats] | StatsArrays,
    design: np.ndarray,
) -> float:
    """Exact marginal log-likelihood of the data at a full parameter point.

    Args:
        params (ModelParameters): Variance components and fixed effects. A
            1x1 ``T`` selects the control-only random-intercept model.
        stats (list[SiteSufficientStats] | StatsArrays): Per-site statistics.
        design (np.ndarray): Site-level design, shape (J, q), constant
            column included.

    Returns:
        float: The log-likelihood.

    Raises:
        DomainError: If T is not PSD or a residual variance is not positive.

    Example:
        >>> stats = [SiteSufficientStats("a", 1, 1, 0.0, 0.0, 0.0, 0.0)]
        >>> params = ModelParameters(np.zeros((1, 1)), 1.0, np.zeros(1))
        >>> round(marginal_loglik(params, stats, np.ones((1, 1))), 4)
        -0.9189
    """
    params.validate()
    T = np.atleast_2d(np.asarray(params.T, dtype=float))
    if T.shape == (1, 1):
        model = MarginalModel.random_intercept(stats, design)
    else:
        model = MarginalModel.random_slope(stats, design)
    beta = np.asarray(params.beta, dtype=float)
    if beta.shape != (model.p,):
        msg = f"beta must have {model.p} entries; got {beta.shape[0]}"
        raise DomainError(msg)
    return model.evaluate(T, params.sigma0_sq, params.sigma1_sq, beta=beta).loglik


def gls_fixed_effects(
    T: np.ndarray,
    sigma0_sq: float,
    stats: list[SiteSufficientStats] | StatsArrays,
    design: np.ndarray,
    sigma1_sq: float | None = None,
) -> np.ndarray:
    """GLS fixed effects at fixed variance components."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape == (1, 1):
        model = MarginalModel.random_intercept(stats, design)
    else:
        model = MarginalModel.random_slope(stats, design)
    C_inv = np.linalg.inv(model.covariance(T, sigma0_sq, sigma1_sq))
    return model.gls(C_inv)
