"""
Seeded generator of synthetic multisite trials with known LRE.

Draw order (part of the external interface, so seeds are portable across
implementations that use numpy's PCG64 ``Generator``):

1. Site stage: site sizes ``integers(n_low, n_high, endpoint=True, size=J)``;
   site means ``normal(0, sqrt(v), size=(J, 4))`` with columns
   (mu_X1, mu_X2, mu_U1, mu_U2); LRE ``normal(0, psi_std * sigma, size=J)``.
2. Individual stage: ``standard_normal((N, 4))`` deviations for
   (X1, X2, U1, U2), site blocks in index order; then ``normal(0, ., N)`` for
   the Y(0) errors; then ``normal(0, ., N)`` for the effect errors.
3. Assignment stage: ``random(N) < 0.5``; then, site by site in index order,
   a site with an empty arm redraws ``random(n_j)`` until both arms are
   populated.

The harness holds stage 1 fixed per cell and redraws stages 2-3 per
replication from :func:`replication_seed` streams.
"""

from dataclasses import dataclass, field

import numpy as np

from metrics.tiers import MIN_SITES_FOR_TIERS, TierLabel, classify_tiers
from simgen.config import VARIANCE_READING_NOTE, GeneratorConfig, OutcomeModel
from trial_data.models import TrialDataset
from utils.logging import get_logger

logger = get_logger(__name__)

SeedLike = int | np.random.SeedSequence


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Site-level ground truth of a synthetic trial.

    Attributes:
        site_ids (tuple[str, ...]): Site identifiers in index order.
        sizes (np.ndarray): Per-site sample sizes n_j.
        theta (np.ndarray): True LRE per site, outcome units.
        delta (np.ndarray): True site ITT effect per site.
        mu_x (np.ndarray): Site means of (X1, X2), shape (J, 2).
        mu_u (np.ndarray): Site means of (U1, U2), shape (J, 2).
        true_tier (np.ndarray): 30/40/30 tier of theta (1 low .. 3 high);
            all 0 (unclassified) with fewer than three sites.
        sigma (float): The scenario's scaling unit.
        scenario (int): Scenario the truth was drawn under.
        psi_std (float): Between-site SD of theta in sigma units.
        metadata (dict): Free-form provenance (variance reading, redraws).
    """

    site_ids: tuple[str, ...]
    sizes: np.ndarray
    theta: np.ndarray
    delta: np.ndarray
    mu_x: np.ndarray
    mu_u: np.ndarray
    true_tier: np.ndarray
    sigma: float
    scenario: int
    psi_std: float
    metadata: dict = field(default_factory=dict)

    @property
    def J(self) -> int:  # noqa: N802
        return len(self.site_ids)


def site_labels(n_sites: int) -> tuple[str, ...]:
    width = len(str(n_sites))
    return tuple(f"site{j + 1:0{width}d}" for j in range(n_sites))


def replication_seed(
    master_seed: int, cell_key: tuple[int, ...], replication: int | None = None
) -> np.random.SeedSequence:
    """Seed-splitting function for Monte Carlo studies.

    ``replication=None`` names the cell's site-level truth stream; otherwise
    the stream of one replication. Streams depend only on their arguments, so
    replications can run in any order or process.

    Args:
        master_seed (int): Study-wide seed.
        cell_key (tuple[int, ...]): Integer coordinates of the cell.
        replication (int | None): Replication number, 0-based.

    Returns:
        np.random.SeedSequence: Seed for ``np.random.default_rng``.
    """
    spawn_key = tuple(cell_key) if replication is None else (*cell_key, replication)
    return np.random.SeedSequence(entropy=master_seed, spawn_key=spawn_key)


def _true_tiers(theta: np.ndarray) -> np.ndarray:
    if theta.shape[0] < MIN_SITES_FOR_TIERS:
        return np.full(theta.shape[0], int(TierLabel.UNCLASSIFIED), dtype=np.int64)
    return classify_tiers(theta)


def draw_site_truth(
    config: GeneratorConfig,
    rng: np.random.Generator,
    model: OutcomeModel | None = None,
) -> SyntheticTruth:
    """Stage 1: site sizes, site covariate means and the LRE of every site."""
    model = model or config.model
    sigma = model.sigma
    sizes = rng.integers(config.n_low, config.n_high, endpoint=True, size=config.J)
    means = rng.normal(0.0, np.sqrt(model.site_mean_var), size=(config.J, 4))
    theta = rng.normal(0.0, config.psi_std * sigma, size=config.J)

    mu_x = means[:, :2]
    mu_u = means[:, 2:]
    delta = (
        model.itt_intercept
        + mu_x @ np.array(model.itt_mu_x)
        + mu_u @ np.array(model.itt_mu_u)
        + theta
    )
    return SyntheticTruth(
        site_ids=site_labels(config.J),
        sizes=sizes,
        theta=theta,
        delta=delta,
        mu_x=mu_x,
        mu_u=mu_u,
        true_tier=_true_tiers(theta),
        sigma=sigma,
        scenario=config.scenario,
        psi_std=config.psi_std,
        metadata={"variance_reading": VARIANCE_READING_NOTE},
    )


def _assign(
    site_idx: np.ndarray, sizes: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    z = rng.random(site_idx.shape[0]) < 0.5  # noqa: PLR2004
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    redraws = 0
    for j, (start, size) in enumerate(zip(starts, sizes, strict=True)):
        block = slice(start, start + size)
        while z[block].all() or not z[block].any():
            z[block] = rng.random(size) < 0.5  # noqa: PLR2004
            redraws += 1
            logger.debug(f"Redrew assignment for site index {j} (n={size})")
    return z.astype(np.int8), redraws


def draw_individuals(
    config: GeneratorConfig,
    truth: SyntheticTruth,
    rng: np.random.Generator,
    model: OutcomeModel | None = None,
) -> tuple[TrialDataset, int]:
    """Stages 2-3: individual covariates, potential outcomes and assignment.

    Returns:
        tuple[TrialDataset, int]: The dataset and the number of assignment
            redraws needed to give every site both arms.
    """
    model = model or config.model
    sizes = np.asarray(truth.sizes, dtype=np.int64)
    site_idx = np.repeat(np.arange(truth.J), sizes)
    n = site_idx.shape[0]

    site_means = np.hstack([truth.mu_x, truth.mu_u])
    covariates = site_means[site_idx] + rng.standard_normal((n, 4))
    x = covariates[:, :2]
    u = covariates[:, 2:]
    eps_y = rng.normal(0.0, np.sqrt(model.y0_error_var), size=n)
    eps_d = rng.normal(0.0, np.sqrt(model.effect_error_var), size=n)

    y0 = (
        model.y0_intercept
        + x @ np.array(model.y0_x)
        + u @ np.array(model.y0_u)
        + truth.mu_x[site_idx] @ np.array(model.y0_mu_x)
        + truth.mu_u[site_idx] @ np.array(model.y0_mu_u)
        + eps_y
    )
    effect = (
        truth.delta[site_idx]
        + x @ np.array(model.effect_x)
        + u @ np.array(model.effect_u)
        + eps_d
    )
    z, redraws = _assign(site_idx, sizes, rng)
    y = y0 + z * effect

    counts = np.bincount(site_idx, minlength=truth.J)
    xbar = np.column_stack(
        [
            np.bincount(site_idx, weights=x[:, k], minlength=truth.J) / counts
            for k in range(2)
        ]
    )
    dataset = TrialDataset.from_arrays(
        site_ids=truth.site_ids,
        site_idx=site_idx,
        z=z,
        y=y,
        x=x,
        phi_x=truth.mu_x,
        covariate_names=("x1", "x2"),
        site_covariate_names=("mu_x1", "mu_x2"),
        extra_site_covariates={"xbar1": xbar[:, 0], "xbar2": xbar[:, 1]},
    )
    if redraws:
        logger.info(f"Assignment redrawn {redraws} time(s) to populate both arms")
    return dataset, redraws


def _generate(
    config: GeneratorConfig, model: OutcomeModel, seed: SeedLike | None
) -> tuple[TrialDataset, SyntheticTruth]:
    rng = np.random.default_rng(config.seed if seed is None else seed)
    truth = draw_site_truth(config, rng, model)
    dataset, redraws = draw_individuals(config, truth, rng, model)
    truth.metadata["assignment_redraws"] = redraws
    logger.debug(
        f"Generated scenario {config.scenario} trial: {dataset.describe()} "
        f"psi_std={config.psi_std} seed={config.seed}"
    )
    return dataset, truth


def generate(
    config: GeneratorConfig,
    model: OutcomeModel | None = None,
    seed: SeedLike | None = None,
) -> tuple[TrialDataset, SyntheticTruth]:
    """Generate one synthetic trial and its ground truth.

    Site covariates exposed to estimators are the true site means of
    (X1, X2); the sample means are attached as extra site covariates
    ``xbar1``/``xbar2``.

    Args:
        config (GeneratorConfig): Scenario, size and seed settings.
        model (OutcomeModel | None): Override of the scenario's outcome model.
        seed (int | SeedSequence | None): Override of ``config.seed``.

    Returns:
        tuple[TrialDataset, SyntheticTruth]: Observed data and truth.

    Example:
        >>> dataset, truth = generate(GeneratorConfig(scenario=1, seed=7))
        >>> dataset.J
        100
    """
    return _generate(config, model or config.model, seed)


def generate_consistency_variant(
    config: GeneratorConfig,
    model: OutcomeModel | None = None,
    seed: SeedLike | None = None,
) -> tuple[TrialDataset, SyntheticTruth]:
    """Like :func:`generate` with unit Y(0) and effect error variances."""
    base = model or config.model
    return _generate(config, base.consistency_variant(), seed)
