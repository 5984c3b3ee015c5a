"""
Maximum-likelihood fits of the Step-1 and Step-2 mixed models.

Both fits profile the fixed effects out by GLS, optimize the log-Cholesky /
log-variance parameters with L-BFGS-B from method-of-moments start values,
and report non-convergence through the result rather than by raising. A fit
that stalls next to a zero variance is refitted on that boundary.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy.optimize import minimize

from lmm.design import build_design, check_rank
from lmm.likelihood import Evaluation, MarginalModel, as_stats_arrays
from lmm.parameterization import chain_gradient, pack, unpack
from lmm.settings import DEFAULT_SETTINGS, EstimationSettings
from trial_data.models import SiteSufficientStats
from trial_data.summary import StatsArrays
from utils.errors import DomainError
from utils.logging import get_logger, log_action

logger = get_logger(__name__)

MIN_SITES_INTERCEPT = 2
MIN_SITES_SLOPE = 3
# Bounds of every variance parameter, relative to the data's scale
VARIANCE_FLOOR = 1e-10
VARIANCE_CEILING = 1e8
START_FLOOR = 1e-2
# Objective assigned to points the likelihood cannot be evaluated at,
# relative to the start value
FAILURE_PENALTY = 1e6
NUMERICAL_FAILURES = (ArithmeticError, np.linalg.LinAlgError, DomainError)


@dataclass(frozen=True)
class FitDiagnostics:
    """Convergence diagnostics of one fit.

    Attributes:
        converged (bool): Relative log-likelihood change and projected
            gradient norm both below their tolerances.
        iterations (int): Accepted quasi-Newton iterations.
        gradient_norm (float): Max-abs projected gradient of the per-site
            mean log-likelihood at the solution.
        relative_change (float): Relative log-likelihood change over the
            last accepted iteration.
        history (tuple[float, ...]): Log-likelihood at the start and after
            every accepted iteration.
        boundary (tuple[str, ...]): Variance components reported as 0.
        message (str): Optimizer status text.
        numerical_failures (int): Trial points where the likelihood could
            not be evaluated and the line search backed off.
    """

    converged: bool
    iterations: int
    gradient_norm: float
    relative_change: float
    history: tuple[float, ...] = ()
    boundary: tuple[str, ...] = ()
    message: str = ""
    numerical_failures: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "relative_change": self.relative_change,
            "boundary": list(self.boundary),
            "history": list(self.history),
            "message": self.message,
            "numerical_failures": self.numerical_failures,
        }


@dataclass(frozen=True, eq=False)
class RandomInterceptFit:
    """Step-1 fit: ``ybar0_j = alpha00 + alpha01 . Phi_Xj + eta0_j + error``.

    Attributes:
        alpha00 (float): Intercept.
        alpha01 (np.ndarray): Coefficients on the site covariates.
        omega00 (float): Random-intercept variance (0 when on the boundary).
        sigma0_sq (float): Within-site control residual variance.
        loglik (float): Maximized log-likelihood.
        covariate_names (tuple[str, ...]): Names matching ``alpha01``.
        n_obs (int): Control records used.
        diagnostics (FitDiagnostics): Convergence details.
    """

    alpha00: float
    alpha01: np.ndarray
    omega00: float
    sigma0_sq: float
    loglik: float
    covariate_names: tuple[str, ...] = ()
    n_obs: int = 0
    diagnostics: FitDiagnostics = field(
        default_factory=lambda: FitDiagnostics(True, 0, 0.0, 0.0)
    )

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged

    @property
    def iterations(self) -> int:
        return self.diagnostics.iterations

    def fitted_means(self, site_covariates: np.ndarray) -> np.ndarray:
        """Predicted control means ``alpha00 + alpha01 . Phi_Xj`` per site.

        ``site_covariates`` has shape (J, m), with m possibly 0.
        """
        return self.alpha00 + np.asarray(site_covariates, dtype=float) @ self.alpha01

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": "random_intercept",
            "fixed_effects": {
                "const": self.alpha00,
                **dict(zip(self.covariate_names, map(float, self.alpha01), strict=True)),
            },
            "random_intercept_variance": self.omega00,
            "sigma0_sq": self.sigma0_sq,
            "loglik": self.loglik,
            "N": self.n_obs,
            "diagnostics": self.diagnostics.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class RandomSlopeFit:
    """Random intercept and treatment-slope model with arm-specific residuals.

    ``gamma0`` and ``gamma1`` hold the intercept-part and slope-part
    coefficients on ``design_names`` (constant first, then the site
    covariates, then ``eta0_star`` when the fit is a Step-2 fit).

    Attributes:
        gamma0 (np.ndarray): Intercept-part fixed effects.
        gamma1 (np.ndarray): Slope-part fixed effects (interactions with Z).
        T (np.ndarray): 2x2 covariance of (v0j, v1j).
        sigma0_sq (float): Control residual variance.
        sigma1_sq (float): Treated residual variance.
        loglik (float): Maximized log-likelihood.
        design_names (tuple[str, ...]): Column names of the site design.
        has_eta (bool): Whether ``eta0_star`` is the last design column.
        n_obs (int): Records used.
        n_sites (int): Sites used.
        diagnostics (FitDiagnostics): Convergence details.
    """

    gamma0: np.ndarray
    gamma1: np.ndarray
    T: np.ndarray
    sigma0_sq: float
    sigma1_sq: float
    loglik: float
    design_names: tuple[str, ...] = ("const",)
    has_eta: bool = False
    n_obs: int = 0
    n_sites: int = 0
    diagnostics: FitDiagnostics = field(
        default_factory=lambda: FitDiagnostics(True, 0, 0.0, 0.0)
    )

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged

    @property
    def iterations(self) -> int:
        return self.diagnostics.iterations

    @property
    def tau00(self) -> float:
        return float(self.T[0, 0])

    @property
    def tau01(self) -> float:
        return float(self.T[0, 1])

    @property
    def tau11(self) -> float:
        return float(self.T[1, 1])

    @property
    def _covariate_slice(self) -> slice:
        return slice(1, len(self.design_names) - (1 if self.has_eta else 0))

    @property
    def gamma00(self) -> float:
        return float(self.gamma0[0])

    @property
    def gamma01(self) -> np.ndarray:
        return self.gamma0[self._covariate_slice]

    @property
    def gamma02(self) -> float | None:
        return float(self.gamma0[-1]) if self.has_eta else None

    @property
    def gamma10(self) -> float:
        return float(self.gamma1[0])

    @property
    def gamma11(self) -> np.ndarray:
        return self.gamma1[self._covariate_slice]

    @property
    def gamma12(self) -> float | None:
        return float(self.gamma1[-1]) if self.has_eta else None

    def fitted_means(self, design: np.ndarray) -> np.ndarray:
        """Predicted (control mean, ITT) per site, shape (J, 2)."""
        design = np.asarray(design, dtype=float)
        return np.column_stack([design @ self.gamma0, design @ self.gamma1])

    def to_dict(self) -> dict[str, Any]:
        """Table-style layout: fixed effects, variance components, N."""
        names = self.design_names
        return {
            "model": "random_slope",
            "fixed_effects": {
                "intercept": dict(zip(names, map(float, self.gamma0), strict=True)),
                "treatment": dict(zip(names, map(float, self.gamma1), strict=True)),
            },
            "random_intercept_variance": self.tau00,
            "random_slope_variance": self.tau11,
            "covariance": self.tau01,
            "sigma0_sq": self.sigma0_sq,
            "sigma1_sq": self.sigma1_sq,
            "loglik": self.loglik,
            "N": self.n_obs,
            "J": self.n_sites,
            "diagnostics": self.diagnostics.to_dict(),
        }


def _pooled_variance(n: np.ndarray, ss: np.ndarray, means: np.ndarray) -> float:
    dof = float(np.sum(n - 1.0))
    if dof > 0 and ss.sum() > 0:
        return float(ss.sum() / dof)
    spread = float(np.var(means))
    return spread if spread > 0 else 1.0


def _moment_start(
    model: MarginalModel, design: np.ndarray, stats: StatsArrays
) -> tuple[np.ndarray, float]:
    """ANOVA-type start values and the variance scale used for bounds."""
    sigma0_sq = _pooled_variance(stats.n0, stats.ss0, stats.ybar0)
    sigma1_sq = (
        _pooled_variance(stats.n1, stats.ss1, stats.ybar1) if model.has_slope else None
    )

    coef, *_ = np.linalg.lstsq(design, model.u, rcond=None)
    resid = model.u - design @ coef
    dof = max(model.J - design.shape[1], 1)
    between = resid.T @ resid / dof
    mean_v = model.covariance(np.zeros((model.k, model.k)), sigma0_sq, sigma1_sq).mean(
        axis=0
    )

    floor = START_FLOOR * float(np.mean(np.diag(mean_v)))
    eigvals, eigvecs = np.linalg.eigh(between - mean_v)
    start_T = eigvecs @ np.diag(np.maximum(eigvals, floor)) @ eigvecs.T
    scale = max(sigma0_sq, sigma1_sq or 0.0)
    return pack(start_T, sigma0_sq, sigma1_sq), scale


Bounds = list[tuple[float, float]]


def _log_limits(scale: float) -> tuple[float, float]:
    low = float(np.log(VARIANCE_FLOOR * scale))
    return low, float(np.log(VARIANCE_CEILING * scale))


@dataclass(frozen=True)
class _Cholesky:
    """Unrestricted T in the log-Cholesky parameterization."""

    k: int

    def natural(self, theta: np.ndarray) -> tuple[np.ndarray, float, float | None]:
        _, T, sigma0_sq, sigma1_sq = unpack(theta, self.k)
        return T, sigma0_sq, sigma1_sq

    def gradient(self, evaluation: Evaluation, theta: np.ndarray) -> np.ndarray:
        L, _, sigma0_sq, sigma1_sq = unpack(theta, self.k)
        return chain_gradient(evaluation, L, sigma0_sq, sigma1_sq)

    def bounds(self, scale: float) -> Bounds:
        low, high = _log_limits(scale)
        if self.k == 1:
            return [(0.5 * low, 0.5 * high), (low, high)]
        reach = float(np.sqrt(VARIANCE_CEILING * scale))
        return [
            (0.5 * low, 0.5 * high),
            (-reach, reach),
            (0.5 * low, 0.5 * high),
            (low, high),
            (low, high),
        ]


@dataclass(frozen=True)
class _Face:
    """T restricted to a boundary face: every entry 0 except one variance.

    ``free`` is the diagonal entry left free, None when T is all zero.
    Vector layout: ``[log T_ff (if free), log sigma0^2, log sigma1^2 (k=2)]``.
    """

    k: int
    free: int | None

    @property
    def zeroed(self) -> tuple[str, ...]:
        if self.k == 1:
            return ("omega00",)
        return tuple(f"tau{i}{i}" for i in range(2) if i != self.free)

    def natural(self, theta: np.ndarray) -> tuple[np.ndarray, float, float | None]:
        T = np.zeros((self.k, self.k))
        offset = 0
        if self.free is not None:
            T[self.free, self.free] = np.exp(theta[0])
            offset = 1
        sigma0_sq = float(np.exp(theta[offset]))
        sigma1_sq = None
        if self.k == 2:  # noqa: PLR2004
            sigma1_sq = float(np.exp(theta[offset + 1]))
        return T, sigma0_sq, sigma1_sq

    def gradient(self, evaluation: Evaluation, theta: np.ndarray) -> np.ndarray:
        T, sigma0_sq, sigma1_sq = self.natural(theta)
        parts = []
        if self.free is not None:
            i = self.free
            parts.append(evaluation.grad_T[i, i] * T[i, i])
        parts.append(evaluation.grad_sigma0_sq * sigma0_sq)
        if sigma1_sq is not None:
            parts.append(evaluation.grad_sigma1_sq * sigma1_sq)
        return np.array(parts)

    def bounds(self, scale: float) -> Bounds:
        size = self.k + (1 if self.free is not None else 0)
        return [_log_limits(scale)] * size

    def start(
        self, T: np.ndarray, sigma0_sq: float, sigma1_sq: float | None, scale: float
    ) -> np.ndarray:
        values = []
        if self.free is not None:
            values.append(max(float(T[self.free, self.free]), START_FLOOR * scale))
        values.append(sigma0_sq)
        if sigma1_sq is not None:
            values.append(sigma1_sq)
        return np.log(values)


def _faces(k: int) -> list[_Face]:
    if k == 1:
        return [_Face(1, None)]
    return [_Face(2, 1), _Face(2, 0), _Face(2, None)]


Parameterization = _Cholesky | _Face


def _projected_gradient(
    theta: np.ndarray, grad: np.ndarray, bounds: Bounds
) -> np.ndarray:
    """Objective gradient with the components pushing past an active bound zeroed."""
    projected = grad.copy()
    for i, (lower, upper) in enumerate(bounds):
        if theta[i] <= lower + 1e-12 * (1 + abs(lower)) and grad[i] > 0:
            projected[i] = 0.0
        if theta[i] >= upper - 1e-12 * (1 + abs(upper)) and grad[i] < 0:
            projected[i] = 0.0
    return projected


class _Objective:
    """Negative per-site mean log-likelihood over an unconstrained vector.

    A point where the likelihood cannot be evaluated (overflow, a singular
    covariance) scores ``penalty`` with a zero gradient, so the line search
    backs off instead of aborting the fit. The best evaluated point is kept.
    """

    def __init__(self, model: MarginalModel, parameterization: Parameterization):
        self.model = model
        self.parameterization = parameterization
        self.penalty = np.inf
        self.failures = 0
        self.last_failed = False
        self.last_theta: np.ndarray | None = None
        self.last_loglik = -np.inf
        self.best_theta: np.ndarray | None = None
        self.best_loglik = -np.inf

    def _evaluate(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        with np.errstate(over="raise", invalid="raise"):
            T, sigma0_sq, sigma1_sq = self.parameterization.natural(theta)
            evaluation = self.model.evaluate(
                T, sigma0_sq, sigma1_sq, with_gradient=True
            )
            grad = self.parameterization.gradient(evaluation, theta)
        if not (np.isfinite(evaluation.loglik) and np.all(np.isfinite(grad))):
            msg = "non-finite log-likelihood or gradient"
            raise FloatingPointError(msg)
        return evaluation.loglik, grad

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        try:
            loglik, grad = self._evaluate(theta)
        except NUMERICAL_FAILURES as e:
            self.failures += 1
            self.last_failed = True
            logger.debug(f"Likelihood not evaluable at {np.round(theta, 3)}: {e}")
            return self.penalty, np.zeros_like(theta)

        self.last_failed = False
        self.last_theta = theta.copy()
        self.last_loglik = loglik
        if loglik > self.best_loglik:
            self.best_theta = theta.copy()
            self.best_loglik = loglik
        n_sites = self.model.J
        return -loglik / n_sites, -grad / n_sites


@dataclass
class _Solution:
    theta: np.ndarray
    parameterization: Parameterization
    loglik: float
    diagnostics: FitDiagnostics


def _maximize(
    model: MarginalModel,
    parameterization: Parameterization,
    theta0: np.ndarray,
    scale: float,
    settings: EstimationSettings,
) -> _Solution:
    bounds = parameterization.bounds(scale)
    lower, upper = np.array(bounds).T
    theta0 = np.clip(theta0, lower, upper)

    objective = _Objective(model, parameterization)
    start_value, _ = objective(theta0)
    if objective.last_failed:
        msg = "Log-likelihood cannot be evaluated at the start values"
        raise DomainError(msg)
    objective.penalty = start_value + FAILURE_PENALTY * (1.0 + abs(start_value))
    history = [objective.last_loglik]

    def record(xk: np.ndarray) -> None:
        if objective.last_failed or not np.array_equal(objective.last_theta, xk):
            objective(xk)
        if not objective.last_failed:
            history.append(float(objective.last_loglik))

    result = minimize(
        objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=record,
        options={
            "maxiter": settings.max_iterations,
            "ftol": 10 * np.finfo(float).eps,
            "gtol": settings.gtol / 10,
            "maxls": 50,
        },
    )

    theta = result.x
    _, grad = objective(theta)
    evaluable = not objective.last_failed
    if not evaluable:
        theta = objective.best_theta
        _, grad = objective(theta)
    final = objective.last_loglik
    if history[-1] != final:
        history.append(final)
    gradient_norm = float(np.max(np.abs(_projected_gradient(theta, grad, bounds))))
    if len(history) >= 2:  # noqa: PLR2004
        relative_change = abs(history[-1] - history[-2]) / max(abs(history[-1]), 1.0)
    else:
        relative_change = 0.0
    converged = (
        evaluable and relative_change < settings.ftol and gradient_norm < settings.gtol
    )

    return _Solution(
        theta=theta,
        parameterization=parameterization,
        loglik=final,
        diagnostics=FitDiagnostics(
            converged=converged,
            iterations=int(result.nit),
            gradient_norm=gradient_norm,
            relative_change=float(relative_change),
            history=tuple(history),
            message=str(result.message),
            numerical_failures=objective.failures,
        ),
    )


def _solve(
    model: MarginalModel,
    design: np.ndarray,
    stats: StatsArrays,
    settings: EstimationSettings,
) -> _Solution:
    """Maximize over all of T, then over its boundary faces if that stalls.

    Near a face the log-Cholesky surface is nearly flat and the optimizer
    stops short of the gradient tolerance. Each face is refitted with the
    zeroed components held at 0; the best converged face replaces the
    unrestricted solution when its log-likelihood is no lower.
    """
    theta0, scale = _moment_start(model, design, stats)
    solution = _maximize(model, _Cholesky(model.k), theta0, scale, settings)
    if solution.diagnostics.converged:
        return solution

    T, sigma0_sq, sigma1_sq = solution.parameterization.natural(solution.theta)
    best: _Solution | None = None
    for face in _faces(model.k):
        start = face.start(T, sigma0_sq, sigma1_sq, scale)
        candidate = _maximize(model, face, start, scale, settings)
        if candidate.diagnostics.converged and (
            best is None or candidate.loglik > best.loglik
        ):
            best = candidate

    tolerance = settings.ftol * max(abs(solution.loglik), 1.0)
    if best is None or best.loglik < solution.loglik - tolerance:
        return solution

    zeroed = ", ".join(best.parameterization.zeroed)
    logger.debug(f"Maximum found on the boundary {zeroed} = 0")
    unrestricted = solution.diagnostics
    best.diagnostics = replace(
        best.diagnostics,
        iterations=unrestricted.iterations + best.diagnostics.iterations,
        message=f"{best.diagnostics.message} (refitted with {zeroed} = 0)",
        numerical_failures=unrestricted.numerical_failures
        + best.diagnostics.numerical_failures,
    )
    return best


def _log_outcome(label: str, diagnostics: FitDiagnostics) -> None:
    if diagnostics.converged:
        logger.debug(f"{label} converged in {diagnostics.iterations} iterations")
    else:
        logger.warning(
            f"{label} did not converge after {diagnostics.iterations} iterations "
            f"(gradient {diagnostics.gradient_norm:.2e}, "
            f"relative change {diagnostics.relative_change:.2e}): "
            f"{diagnostics.message}"
        )


@log_action("random-intercept fit")
def fit_random_intercept(
    control_stats: list[SiteSufficientStats] | StatsArrays,
    site_covariates: np.ndarray | None = None,
    covariate_names: Sequence[str] | None = None,
    settings: EstimationSettings = DEFAULT_SETTINGS,
) -> RandomInterceptFit:
    """Step 1: ML fit of the control-arm random-intercept model.

    Only the control arm of each site enters (``n0``, ``ybar0``, ``ss0``).

    Args:
        control_stats (list[SiteSufficientStats] | StatsArrays): Per-site
            statistics; treated-arm fields are ignored.
        site_covariates (np.ndarray | None): Phi_X, shape (J, m).
        covariate_names (Sequence[str] | None): Names of the m columns.
        settings (EstimationSettings): Optimizer tolerances.

    Returns:
        RandomInterceptFit: Estimates and diagnostics.

    Raises:
        DomainError: If fewer than two sites are given.
        RankError: If the site covariates are collinear with the constant or
            each other.
    """
    stats = as_stats_arrays(control_stats)
    if stats.J < MIN_SITES_INTERCEPT:
        msg = f"Random-intercept fit needs at least {MIN_SITES_INTERCEPT} sites"
        raise DomainError(msg)
    design, names = build_design(site_covariates, stats.J, covariate_names)
    check_rank(design, names)

    model = MarginalModel.random_intercept(stats, design)
    solution = _solve(model, design, stats, settings)

    T, sigma0_sq, _ = solution.parameterization.natural(solution.theta)
    evaluation = model.evaluate(T, sigma0_sq)
    omega00 = float(T[0, 0])
    flagged = []
    if omega00 < settings.boundary_tol * sigma0_sq:
        omega00 = 0.0
        flagged.append("omega00")
    diagnostics = replace(solution.diagnostics, boundary=tuple(flagged))
    _log_outcome("Random-intercept fit", diagnostics)

    return RandomInterceptFit(
        alpha00=float(evaluation.beta[0]),
        alpha01=evaluation.beta[1:].copy(),
        omega00=omega00,
        sigma0_sq=sigma0_sq,
        loglik=evaluation.loglik,
        covariate_names=names[1:],
        n_obs=int(stats.n0.sum()),
        diagnostics=diagnostics,
    )


@log_action("random-slope fit")
def fit_random_slope(
    stats: list[SiteSufficientStats] | StatsArrays,
    site_covariates: np.ndarray | None = None,
    eta0_star: np.ndarray | None = None,
    covariate_names: Sequence[str] | None = None,
    settings: EstimationSettings = DEFAULT_SETTINGS,
) -> RandomSlopeFit:
    """ML fit of the random intercept and treatment-slope model.

    Fixed effects are the design columns (constant, site covariates and,
    for Step 2, ``eta0_star``) and their interactions with the uncentered
    treatment indicator. ``eta0_star`` is treated as a known covariate.

    Args:
        stats (list[SiteSufficientStats] | StatsArrays): Per-site statistics.
        site_covariates (np.ndarray | None): Site covariates, shape (J, m).
        eta0_star (np.ndarray | None): Step-1 posterior means, shape (J,).
        covariate_names (Sequence[str] | None): Names of the m columns.
        settings (EstimationSettings): Optimizer tolerances.

    Returns:
        RandomSlopeFit: Estimates and diagnostics; T is PSD by construction.

    Raises:
        DomainError: If fewer than three sites are given.
        RankError: If the design columns are collinear.

    Example:
        >>> step2 = fit_random_slope(stats, dataset.phi_x, eta0_star=etas)
        >>> step2.gamma12, step2.tau11
    """
    stats = as_stats_arrays(stats)
    if stats.J < MIN_SITES_SLOPE:
        msg = f"Random-slope fit needs at least {MIN_SITES_SLOPE} sites"
        raise DomainError(msg)
    design, names = build_design(site_covariates, stats.J, covariate_names, eta0_star)
    check_rank(design, names)

    model = MarginalModel.random_slope(stats, design)
    solution = _solve(model, design, stats, settings)

    T, sigma0_sq, sigma1_sq = solution.parameterization.natural(solution.theta)
    evaluation = model.evaluate(T, sigma0_sq, sigma1_sq)
    T = T.copy()
    flagged = []
    if T[0, 0] < settings.boundary_tol * sigma0_sq:
        T[0, 0] = T[0, 1] = T[1, 0] = 0.0
        flagged.append("tau00")
    if T[1, 1] < settings.boundary_tol * sigma1_sq:
        T[1, 1] = T[0, 1] = T[1, 0] = 0.0
        flagged.append("tau11")
    diagnostics = replace(solution.diagnostics, boundary=tuple(flagged))
    _log_outcome("Random-slope fit", diagnostics)

    q = design.shape[1]
    return RandomSlopeFit(
        gamma0=evaluation.beta[:q].copy(),
        gamma1=evaluation.beta[q:].copy(),
        T=T,
        sigma0_sq=sigma0_sq,
        sigma1_sq=sigma1_sq,
        loglik=evaluation.loglik,
        design_names=names,
        has_eta=eta0_star is not None,
        n_obs=model.n_obs,
        n_sites=stats.J,
        diagnostics=diagnostics,
    )
