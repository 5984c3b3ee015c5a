"""
Running one study cell: fixed site truth, replicated individuals.

A cell draws its site-level truth once from the cell's seed stream, then
every replication draws individuals and assignment from its own stream and
runs every evaluated strategy. Replications are independent, so they are
split into batches and may run in worker processes; results are put back in
replication order before aggregation.
"""

import json
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from tqdm import tqdm

from harness.config import (
    NONCONVERGENCE_FLAG_RATE,
    CellSpec,
    SizeSetting,
    StudyConfig,
)
from lmm.settings import EstimationSettings
from metrics.criteria import CellSummary, summarize_cell
from simgen.generator import (
    SyntheticTruth,
    draw_individuals,
    draw_site_truth,
    replication_seed,
)
from strategies.estimate import run_strategy
from strategies.ids import StrategyId
from trial_data.summary import summarize_arrays
from utils.errors import CheckpointError
from utils.logging import get_logger

logger = get_logger(__name__)

BATCHES_PER_WORKER = 4


@dataclass(frozen=True)
class ReplicationOutcome:
    """Points and convergence of every strategy in one replication."""

    replication: int
    points: dict[str, np.ndarray]
    converged: dict[str, bool]
    clamped_sites: dict[str, int]
    assignment_redraws: int


@dataclass(frozen=True, eq=False)
class CellResult:
    """Aggregated outcome of one cell, as stored in its checkpoint.

    Attributes:
        cell (CellSpec): The cell.
        summaries (list[CellSummary]): One row per reported strategy.
        nonconverged (dict[str, int]): Non-converged replications per strategy.
        flagged (bool): Some strategy failed to converge in more than 5% of
            the replications.
        wall_clock (float): Seconds spent on the cell.
        truth_sigma (float): Scaling unit of the cell.
        assignment_redraws (int): Assignment redraws over all replications.
        clamped_sites (dict[str, int]): Clamped posterior variances, summed
            over replications.
        per_site (dict[str, list[list[float]]]): Raw (R, J) estimates per
            strategy; empty unless requested.
        theta (list[float]): The cell's true LRE values.
    """

    cell: CellSpec
    summaries: list[CellSummary]
    nonconverged: dict[str, int]
    flagged: bool
    wall_clock: float
    truth_sigma: float
    assignment_redraws: int = 0
    clamped_sites: dict[str, int] = field(default_factory=dict)
    per_site: dict[str, list[list[float]]] = field(default_factory=dict)
    theta: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "cell": {
                "scenario": self.cell.scenario,
                "psi_std": self.cell.psi_std,
                "J": self.cell.size.J,
                "n_low": self.cell.size.n_low,
                "n_high": self.cell.size.n_high,
            },
            "summaries": [s.to_row() for s in self.summaries],
            "nonconverged": self.nonconverged,
            "flagged": self.flagged,
            "wall_clock": self.wall_clock,
            "truth_sigma": self.truth_sigma,
            "assignment_redraws": self.assignment_redraws,
            "clamped_sites": self.clamped_sites,
            "per_site": self.per_site,
            "theta": self.theta,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CellResult":
        cell = data["cell"]
        return cls(
            cell=CellSpec(
                scenario=int(cell["scenario"]),
                psi_std=float(cell["psi_std"]),
                size=SizeSetting(
                    int(cell["J"]), int(cell["n_low"]), int(cell["n_high"])
                ),
            ),
            summaries=[CellSummary(**row) for row in data["summaries"]],
            nonconverged={k: int(v) for k, v in data["nonconverged"].items()},
            flagged=bool(data["flagged"]),
            wall_clock=float(data["wall_clock"]),
            truth_sigma=float(data["truth_sigma"]),
            assignment_redraws=int(data.get("assignment_redraws", 0)),
            clamped_sites={
                k: int(v) for k, v in data.get("clamped_sites", {}).items()
            },
            per_site=data.get("per_site", {}),
            theta=[float(v) for v in data.get("theta", [])],
        )


def checkpoint_path(out_dir: Path, cell: CellSpec) -> Path:
    return out_dir / "cells" / f"{cell.key}.json"


def write_checkpoint(out_dir: Path, result: CellResult) -> Path:
    path = checkpoint_path(out_dir, result.cell)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(result.to_dict(), f, indent=2)
    tmp.replace(path)
    return path


def read_checkpoint(out_dir: Path, cell: CellSpec) -> CellResult | None:
    """Load a finished cell, or None when it has no checkpoint yet.

    Raises:
        CheckpointError: If the checkpoint exists but cannot be read back.
    """
    path = checkpoint_path(out_dir, cell)
    if not path.exists():
        return None
    try:
        with open(path, encoding="utf-8") as f:
            result = CellResult.from_dict(json.load(f))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        msg = f"Checkpoint for cell '{cell.key}' at {path} is corrupt: {e}"
        raise CheckpointError(msg, cell=cell.key) from e
    if result.cell.key != cell.key:
        msg = f"Checkpoint {path} belongs to cell '{result.cell.key}'"
        raise CheckpointError(msg, cell=cell.key)
    return result


def _run_replications(args: tuple) -> list[ReplicationOutcome]:
    """Worker: run a batch of replications of one cell.

    Module level so ProcessPoolExecutor can pickle it.
    """
    cell, truth, replications, strategies, master_seed, settings = args
    generator_config = cell.generator_config(master_seed)
    outcomes = []
    for r in replications:
        rng = np.random.default_rng(replication_seed(master_seed, cell.seed_key, r))
        dataset, redraws = draw_individuals(generator_config, truth, rng)
        stats = summarize_arrays(dataset)
        points, converged, clamped = {}, {}, {}
        for strategy in strategies:
            result = run_strategy(
                strategy,
                dataset,
                truth if strategy.requires_truth else None,
                settings,
                stats=stats,
            )
            points[strategy.value] = result.points
            converged[strategy.value] = result.converged
            clamped[strategy.value] = result.clamped_sites
        outcomes.append(ReplicationOutcome(r, points, converged, clamped, redraws))
    return outcomes


def _batches(replications: int, n_batches: int) -> list[list[int]]:
    return [
        chunk.tolist()
        for chunk in np.array_split(np.arange(replications), n_batches)
        if len(chunk)
    ]


def _collect(
    cell: CellSpec,
    truth: SyntheticTruth,
    strategies: tuple[StrategyId, ...],
    replications: int,
    jobs: int,
    master_seed: int,
    settings: EstimationSettings,
    progress: bool,
) -> list[ReplicationOutcome]:
    if jobs == 1:
        batches = [[r] for r in range(replications)]
    else:
        batches = _batches(replications, min(jobs * BATCHES_PER_WORKER, replications))
    tasks = [(cell, truth, batch, strategies, master_seed, settings) for batch in batches]

    outcomes: list[ReplicationOutcome] = []
    with tqdm(
        total=replications, desc=cell.key, unit="rep", disable=not progress
    ) as bar:
        if jobs == 1:
            for task in tasks:
                batch = _run_replications(task)
                outcomes.extend(batch)
                bar.update(len(batch))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as executor:
                futures = [executor.submit(_run_replications, task) for task in tasks]
                for future in as_completed(futures):
                    batch = future.result()
                    outcomes.extend(batch)
                    bar.update(len(batch))
    return sorted(outcomes, key=lambda o: o.replication)


def draw_cell_truth(cell: CellSpec, master_seed: int) -> SyntheticTruth:
    """Site-level truth of a cell, fixed across its replications."""
    rng = np.random.default_rng(replication_seed(master_seed, cell.seed_key))
    return draw_site_truth(cell.generator_config(master_seed), rng)


def run_cell(cell: CellSpec, config: StudyConfig, progress: bool = False) -> CellResult:
    """Run every replication of one cell and aggregate the criteria.

    Args:
        cell (CellSpec): The cell to run.
        config (StudyConfig): Study settings (replications, strategies, seed).
        progress (bool): Show a progress bar.

    Returns:
        CellResult: Summaries for the requested strategies. Non-converged
            replications are kept and counted.
    """
    start = time.perf_counter()
    truth = draw_cell_truth(cell, config.master_seed)
    strategies = config.evaluated_strategies
    outcomes = _collect(
        cell,
        truth,
        strategies,
        config.replications,
        config.jobs,
        config.master_seed,
        config.estimation,
        progress,
    )

    names = [s.value for s in strategies]
    estimates = {
        name: np.vstack([o.points[name] for o in outcomes]) for name in names
    }
    nonconverged = {
        name: sum(not o.converged[name] for o in outcomes) for name in names
    }
    summaries = summarize_cell(
        estimates, truth.theta, truth.true_tier, truth.sigma, nonconverged
    )
    requested = {s.value for s in config.strategies}
    summaries = [s for s in summaries if s.strategy in requested]

    flagged = any(
        count > NONCONVERGENCE_FLAG_RATE * config.replications
        for name, count in nonconverged.items()
        if name in requested
    )
    if flagged:
        logger.warning(
            f"Cell {cell.key}: non-convergence above "
            f"{NONCONVERGENCE_FLAG_RATE:.0%} of replications: {nonconverged}"
        )

    elapsed = time.perf_counter() - start
    logger.info(
        f"Cell {cell.key} finished {config.replications} replications in {elapsed:.1f}s"
    )
    return CellResult(
        cell=cell,
        summaries=summaries,
        nonconverged={k: v for k, v in nonconverged.items() if k in requested},
        flagged=flagged,
        wall_clock=elapsed,
        truth_sigma=truth.sigma,
        assignment_redraws=sum(o.assignment_redraws for o in outcomes),
        clamped_sites={
            name: sum(o.clamped_sites[name] for o in outcomes)
            for name in names
            if name in requested
        },
        per_site=(
            {name: estimates[name].tolist() for name in names if name in requested}
            if config.keep_per_site
            else {}
        ),
        theta=truth.theta.tolist(),
    )
