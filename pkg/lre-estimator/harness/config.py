"""
Study and consistency-grid configuration.

Both configs are frozen dataclasses whose defaults give the full factorial
simulation design; :meth:`StudyConfig.from_settings` layers the ``study``
config section and CLI flags on top of them.
"""

from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from typing import Any

from lmm.fit import MIN_SITES_SLOPE
from lmm.settings import DEFAULT_SETTINGS, EstimationSettings
from simgen.config import MAX_PSI_STD, MIN_SITE_SIZE, SCENARIOS, GeneratorConfig
from strategies.ids import ALL_STRATEGIES, StrategyId
from utils.config import merge_settings
from utils.errors import UsageError

DEFAULT_MASTER_SEED = 20240101
DEFAULT_PSI_GRID = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35)
NONCONVERGENCE_FLAG_RATE = 0.05
SIZE_RANGE_LOW = 0.3
SIZE_RANGE_HIGH = 1.7
MIN_STUDY_SITES = MIN_SITES_SLOPE


@dataclass(frozen=True)
class SizeSetting:
    """Number of sites and the uniform per-site sample-size bounds.

    A study needs at least three sites, the fewest a random-slope fit and
    the tier split accept, and at least two records per site.
    """

    J: int
    n_low: int
    n_high: int

    def __post_init__(self) -> None:
        if self.J < MIN_STUDY_SITES:
            msg = f"A study cell needs at least {MIN_STUDY_SITES} sites; got J={self.J}"
            raise UsageError(msg)
        if not MIN_SITE_SIZE <= self.n_low <= self.n_high:
            msg = (
                f"Site sizes need {MIN_SITE_SIZE} <= n_low <= n_high; "
                f"got {self.n_low}..{self.n_high}"
            )
            raise UsageError(msg)

    @classmethod
    def parse(cls, value: "SizeSetting | Sequence[int] | str") -> "SizeSetting":
        """Accept a SizeSetting, ``(J, lo, hi)`` or ``"J:lo:hi"``."""
        if isinstance(value, SizeSetting):
            return value
        parts = value.split(":") if isinstance(value, str) else list(value)
        try:
            J, n_low, n_high = (int(p) for p in parts)
        except (TypeError, ValueError) as e:
            msg = f"Size setting must be (J, n_low, n_high) or 'J:lo:hi'; got {value!r}"
            raise UsageError(msg) from e
        return cls(J, n_low, n_high)

    @property
    def label(self) -> str:
        return f"J{self.J}_n{self.n_low}-{self.n_high}"

    @property
    def mean_size(self) -> float:
        return (self.n_low + self.n_high) / 2


DEFAULT_SIZE_SETTINGS = (
    SizeSetting(100, 30, 170),
    SizeSetting(100, 400, 1000),
    SizeSetting(100, 10, 30),
    SizeSetting(30, 30, 170),
)


@dataclass(frozen=True)
class CellSpec:
    """One (scenario, psi, size) cell of a study."""

    scenario: int
    psi_std: float
    size: SizeSetting

    @property
    def key(self) -> str:
        return f"s{self.scenario}_psi{self.psi_std:.4f}_{self.size.label}"

    @property
    def seed_key(self) -> tuple[int, ...]:
        """Integer coordinates for seed splitting; independent of grid order."""
        return (
            self.scenario,
            round(self.psi_std * 10_000),
            self.size.J,
            self.size.n_low,
            self.size.n_high,
        )

    def generator_config(self, master_seed: int) -> GeneratorConfig:
        return GeneratorConfig(
            scenario=self.scenario,
            J=self.size.J,
            n_low=self.size.n_low,
            n_high=self.size.n_high,
            psi_std=self.psi_std,
            seed=master_seed,
        )


def _check_psi(psi_grid: Sequence[float]) -> None:
    for psi in psi_grid:
        if not 0 <= psi <= MAX_PSI_STD:
            msg = f"psi values must lie in [0, {MAX_PSI_STD}]; got {psi}"
            raise UsageError(msg)


@dataclass(frozen=True)
class StudyConfig:
    """Factorial Monte Carlo study design.

    Attributes:
        scenarios (tuple[int, ...]): Data-generating scenarios.
        psi_grid (tuple[float, ...]): Between-site SDs of the LRE, sigma units.
        size_settings (tuple[SizeSetting, ...]): Site counts and size bounds.
        replications (int): Replications per cell.
        strategies (tuple[StrategyId, ...]): Strategies reported; ITT is
            always evaluated as the reference.
        master_seed (int): Seed every stream is split from.
        jobs (int): Worker processes per cell.
        keep_per_site (bool): Also emit per-site raw estimates.
        estimation (EstimationSettings): Optimizer tolerances.
    """

    scenarios: tuple[int, ...] = SCENARIOS
    psi_grid: tuple[float, ...] = DEFAULT_PSI_GRID
    size_settings: tuple[SizeSetting, ...] = DEFAULT_SIZE_SETTINGS
    replications: int = 500
    strategies: tuple[StrategyId, ...] = ALL_STRATEGIES
    master_seed: int = DEFAULT_MASTER_SEED
    jobs: int = 1
    keep_per_site: bool = False
    estimation: EstimationSettings = field(default=DEFAULT_SETTINGS)

    def __post_init__(self) -> None:
        if self.replications < 1:
            msg = f"replications must be at least 1; got {self.replications}"
            raise UsageError(msg)
        if not (self.scenarios and self.psi_grid and self.size_settings):
            msg = "scenarios, psi_grid and size_settings must all be nonempty"
            raise UsageError(msg)
        if not self.strategies:
            msg = "At least one strategy must be requested"
            raise UsageError(msg)
        if self.jobs < 1:
            msg = f"jobs must be at least 1; got {self.jobs}"
            raise UsageError(msg)
        unknown = [s for s in self.scenarios if s not in SCENARIOS]
        if unknown:
            msg = f"Unknown scenarios {unknown}; choose from {SCENARIOS}"
            raise UsageError(msg)
        _check_psi(self.psi_grid)

    @property
    def evaluated_strategies(self) -> tuple[StrategyId, ...]:
        """Requested strategies with ITT prepended when absent."""
        if StrategyId.ITT in self.strategies:
            return self.strategies
        return (StrategyId.ITT, *self.strategies)

    def cells(self) -> list[CellSpec]:
        """Cells in deterministic (scenario, psi, size) order."""
        return [
            CellSpec(scenario, psi, size)
            for scenario in self.scenarios
            for psi in self.psi_grid
            for size in self.size_settings
        ]

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["strategies"] = [s.value for s in self.strategies]
        data["size_settings"] = [asdict(s) for s in self.size_settings]
        return data

    @classmethod
    def from_settings(
        cls,
        section: dict[str, Any] | None = None,
        overrides: dict[str, Any] | None = None,
        estimation: EstimationSettings = DEFAULT_SETTINGS,
    ) -> "StudyConfig":
        """Build a config with precedence overrides > config section > defaults.

        Raises:
            SchemaError: If the section names an unknown key.
            UsageError: If a value is out of range.
        """
        defaults = {
            "scenarios": SCENARIOS,
            "psi_grid": DEFAULT_PSI_GRID,
            "size_settings": DEFAULT_SIZE_SETTINGS,
            "replications": 500,
            "strategies": ALL_STRATEGIES,
            "master_seed": DEFAULT_MASTER_SEED,
            "jobs": 1,
            "keep_per_site": False,
        }
        merged = merge_settings(defaults, section or {}, overrides or {})
        return cls(
            scenarios=tuple(int(s) for s in merged["scenarios"]),
            psi_grid=tuple(float(p) for p in merged["psi_grid"]),
            size_settings=tuple(SizeSetting.parse(s) for s in merged["size_settings"]),
            replications=int(merged["replications"]),
            strategies=tuple(
                s if isinstance(s, StrategyId) else StrategyId.parse(s)
                for s in merged["strategies"]
            ),
            master_seed=int(merged["master_seed"]),
            jobs=int(merged["jobs"]),
            keep_per_site=bool(merged["keep_per_site"]),
            estimation=estimation,
        )


DEFAULT_MAX_RECORDS = 20_000_000


@dataclass(frozen=True)
class ConsistencyConfig:
    """Grid of (J, mean site size, psi) cells for the consistency check.

    Site sizes are uniform on ``[0.3 * nbar, 1.7 * nbar]``. Cells whose
    expected record count exceeds ``max_records`` are skipped with a note.
    ``datasets`` > 1 averages the criteria over several generated datasets.
    """

    J_grid: tuple[int, ...] = (100, 1000)
    nbar_grid: tuple[int, ...] = (100, 1000, 10_000, 50_000)
    psi_grid: tuple[float, ...] = (0.1, 0.35)
    scenario: int = 1
    datasets: int = 1
    master_seed: int = DEFAULT_MASTER_SEED
    max_records: int = DEFAULT_MAX_RECORDS
    estimation: EstimationSettings = field(default=DEFAULT_SETTINGS)

    def __post_init__(self) -> None:
        if not (self.J_grid and self.nbar_grid and self.psi_grid):
            msg = "J_grid, nbar_grid and psi_grid must all be nonempty"
            raise UsageError(msg)
        if self.datasets < 1:
            msg = f"datasets must be at least 1; got {self.datasets}"
            raise UsageError(msg)
        if min(self.J_grid) < MIN_STUDY_SITES:
            msg = f"J_grid values must be at least {MIN_STUDY_SITES}; got {self.J_grid}"
            raise UsageError(msg)
        _check_psi(self.psi_grid)

    @staticmethod
    def size_range(nbar: int) -> tuple[int, int]:
        return max(MIN_SITE_SIZE, round(SIZE_RANGE_LOW * nbar)), round(SIZE_RANGE_HIGH * nbar)

    def cells(self) -> list[CellSpec]:
        return [
            CellSpec(self.scenario, psi, SizeSetting(J, *self.size_range(nbar)))
            for psi in self.psi_grid
            for J in self.J_grid
            for nbar in self.nbar_grid
        ]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_settings(
        cls,
        section: dict[str, Any] | None = None,
        overrides: dict[str, Any] | None = None,
        estimation: EstimationSettings = DEFAULT_SETTINGS,
    ) -> "ConsistencyConfig":
        defaults = {
            "J_grid": (100, 1000),
            "nbar_grid": (100, 1000, 10_000, 50_000),
            "psi_grid": (0.1, 0.35),
            "scenario": 1,
            "datasets": 1,
            "master_seed": DEFAULT_MASTER_SEED,
            "max_records": DEFAULT_MAX_RECORDS,
        }
        merged = merge_settings(defaults, section or {}, overrides or {})
        return cls(
            J_grid=tuple(int(v) for v in merged["J_grid"]),
            nbar_grid=tuple(int(v) for v in merged["nbar_grid"]),
            psi_grid=tuple(float(v) for v in merged["psi_grid"]),
            scenario=int(merged["scenario"]),
            datasets=int(merged["datasets"]),
            master_seed=int(merged["master_seed"]),
            max_records=int(merged["max_records"]),
            estimation=estimation,
        )
