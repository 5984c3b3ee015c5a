"""
Generator configuration and the outcome models of the two scenarios.

Scenario 1 lets both unobserved covariates predict Y(0) and the treatment
effect, so adjusting for X and Y(0) is as good as adjusting for X and U.
Scenario 2 drops U2 (and rescales U1) in the Y(0) model while U2 still
moves the effect, which breaks that comparability.

All "N(m, v)" parameters below are variances, not standard deviations.
"""

from dataclasses import dataclass, replace

import numpy as np

from utils.errors import UsageError

SCENARIOS = (1, 2)
MIN_SITES = 2
MIN_SITE_SIZE = 2
FIXED_TREAT_PROB = 0.5
MAX_PSI_STD = 0.35

VARIANCE_READING_NOTE = (
    "N(0, 0.1) site means, N(0, 3000) Y(0) error and N(., 4) effect error are "
    "read as variances"
)


@dataclass(frozen=True)
class OutcomeModel:
    """Coefficients of the potential-outcome and site-effect models.

    Tuples are ordered (first covariate, second covariate), e.g. ``y0_x`` is
    the Y(0) coefficient on (X1, X2).
    """

    y0_intercept: float = 197.0
    y0_x: tuple[float, float] = (120.0, -100.0)
    y0_u: tuple[float, float] = (60.0, -50.0)
    y0_mu_x: tuple[float, float] = (20.0, -30.0)
    y0_mu_u: tuple[float, float] = (20.0, -20.0)
    y0_error_var: float = 3000.0
    itt_intercept: float = 13.0
    itt_mu_x: tuple[float, float] = (-70.0, 70.0)
    itt_mu_u: tuple[float, float] = (-80.0, 90.0)
    effect_x: tuple[float, float] = (4.0, 2.5)
    effect_u: tuple[float, float] = (-2.0, -1.5)
    effect_error_var: float = 4.0
    site_mean_var: float = 0.1

    @property
    def sigma(self) -> float:
        """Expected within-site SD of Y(0): the effect-size scaling unit."""
        coefficients = np.array([*self.y0_x, *self.y0_u])
        return float(np.sqrt(np.sum(coefficients**2) + self.y0_error_var))

    def consistency_variant(self) -> "OutcomeModel":
        """Same model with unit error variances for Y(0) and the effect."""
        return replace(self, y0_error_var=1.0, effect_error_var=1.0)

    def without_unobserved(self) -> "OutcomeModel":
        """Same model with every coefficient on U and mu_U set to zero."""
        zero = (0.0, 0.0)
        return replace(
            self, y0_u=zero, y0_mu_u=zero, itt_mu_u=zero, effect_u=zero
        )


SCENARIO_MODELS: dict[int, OutcomeModel] = {
    1: OutcomeModel(),
    2: OutcomeModel(
        y0_u=(78.0, 0.0),
        y0_mu_u=(28.0, 0.0),
    ),
}


@dataclass(frozen=True)
class GeneratorConfig:
    """Settings for one synthetic multisite trial.

    Attributes:
        scenario (int): 1 (comparability holds) or 2 (violated).
        J (int): Number of sites.
        n_low (int): Smallest per-site sample size (inclusive).
        n_high (int): Largest per-site sample size (inclusive).
        psi_std (float): Between-site SD of the LRE in sigma units.
        seed (int): Seed of the PCG64 stream.
        treat_prob (float): Assignment probability, fixed at 0.5.
    """

    scenario: int = 1
    J: int = 100
    n_low: int = 30
    n_high: int = 170
    psi_std: float = 0.1
    seed: int = 20240101
    treat_prob: float = FIXED_TREAT_PROB

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            msg = f"scenario must be one of {SCENARIOS}; got {self.scenario}"
            raise UsageError(msg)
        if self.J < MIN_SITES:
            msg = f"J must be at least {MIN_SITES}; got {self.J}"
            raise UsageError(msg)
        if not MIN_SITE_SIZE <= self.n_low <= self.n_high:
            msg = (
                f"Need {MIN_SITE_SIZE} <= n_low <= n_high so both arms can be "
                f"populated; got {self.n_low}..{self.n_high}"
            )
            raise UsageError(msg)
        if self.psi_std < 0:
            msg = f"psi_std must be non-negative; got {self.psi_std}"
            raise UsageError(msg)
        if self.treat_prob != FIXED_TREAT_PROB:
            msg = f"treat_prob is fixed at {FIXED_TREAT_PROB}"
            raise UsageError(msg)

    @property
    def model(self) -> OutcomeModel:
        return SCENARIO_MODELS[self.scenario]

    @property
    def mean_site_size(self) -> float:
        return (self.n_low + self.n_high) / 2
