"""
Monte Carlo study driver and its output files.

``run_study`` walks the cells of a :class:`StudyConfig` in a fixed order.
With an output directory every finished cell is checkpointed to
``cells/<cell key>.json`` so an interrupted study can resume; the summary
is then assembled from the cells in config order, which keeps
``summary.csv`` byte-identical across reruns, resumes and ``--jobs`` values.
"""

import json
import platform
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any

import pandas as pd

from harness.cell import CellResult, read_checkpoint, run_cell, write_checkpoint
from harness.config import StudyConfig
from simgen.config import VARIANCE_READING_NOTE
from simgen.generator import replication_seed
from utils.logging import get_logger, log_action

logger = get_logger(__name__)

PACKAGE_NAME = "multisite-lre"
SUMMARY_FILE = "summary.csv"
PER_SITE_FILE = "per_site.csv"
PROVENANCE_FILE = "provenance.json"
TRUTH_PROTOCOL_NOTE = (
    "Site-level truth (sizes, site means, LRE) is drawn once per cell; each "
    "replication redraws individuals and assignment only"
)

CELL_COLUMNS = ("scenario", "psi_std", "J", "n_low", "n_high")
SUMMARY_COLUMNS = (
    *CELL_COLUMNS,
    "strategy",
    "mean_bias",
    "sd_bias",
    "avg_emp_var",
    "variance_ratio",
    "avg_rmse",
    "rmse_reduction",
    "sce_rate",
    "mce_rate",
    "replications",
    "nonconverged",
    "flagged",
)


def software_versions() -> dict[str, str]:
    versions = {"python": platform.python_version()}
    for package in (PACKAGE_NAME, "numpy", "scipy", "pandas"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


@dataclass(frozen=True, eq=False)
class StudySummary:
    """Cell summaries of a study plus its provenance record.

    Attributes:
        cells (list[CellResult]): Finished cells in config order.
        provenance (dict[str, Any]): Config echo, seeds, software versions
            and wall-clock per cell.
    """

    cells: list[CellResult]
    provenance: dict[str, Any] = field(default_factory=dict)

    def summary_frame(self) -> pd.DataFrame:
        rows = []
        for result in self.cells:
            cell = result.cell
            for summary in result.summaries:
                rows.append(
                    {
                        "scenario": cell.scenario,
                        "psi_std": cell.psi_std,
                        "J": cell.size.J,
                        "n_low": cell.size.n_low,
                        "n_high": cell.size.n_high,
                        **summary.to_row(),
                        "flagged": result.flagged,
                    }
                )
        return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))

    def per_site_frame(self) -> pd.DataFrame:
        """Long table of raw estimates: one row per (cell, strategy, rep, site)."""
        frames = []
        for result in self.cells:
            cell = result.cell
            for strategy, matrix in result.per_site.items():
                for replication, points in enumerate(matrix):
                    frames.append(
                        pd.DataFrame(
                            {
                                "scenario": cell.scenario,
                                "psi_std": cell.psi_std,
                                "J": cell.size.J,
                                "n_low": cell.size.n_low,
                                "n_high": cell.size.n_high,
                                "strategy": strategy,
                                "replication": replication,
                                "site_index": range(len(points)),
                                "point": points,
                                "theta": result.theta,
                            }
                        )
                    )
        if not frames:
            return pd.DataFrame()
        return pd.concat(frames, ignore_index=True)


def _provenance(config: StudyConfig, cells: list[CellResult]) -> dict[str, Any]:
    return {
        "config": config.to_dict(),
        "master_seed": config.master_seed,
        "truth_protocol": TRUTH_PROTOCOL_NOTE,
        "variance_reading": VARIANCE_READING_NOTE,
        "seed_splitting": (
            "numpy SeedSequence(entropy=master_seed, spawn_key=cell seed key "
            "[+ replication]) feeding PCG64"
        ),
        "software": software_versions(),
        "cells": [
            {
                "key": result.cell.key,
                "seed_key": list(result.cell.seed_key),
                "truth_entropy": replication_seed(
                    config.master_seed, result.cell.seed_key
                ).entropy,
                "wall_clock_seconds": result.wall_clock,
                "sigma": result.truth_sigma,
                "nonconverged": result.nonconverged,
                "flagged": result.flagged,
                "assignment_redraws": result.assignment_redraws,
                "clamped_posterior_variances": result.clamped_sites,
            }
            for result in cells
        ],
    }


@log_action("Monte Carlo study")
def run_study(
    config: StudyConfig,
    out_dir: str | Path | None = None,
    resume: bool = False,
    progress: bool = False,
) -> StudySummary:
    """Run every cell of a study.

    Args:
        config (StudyConfig): The study design.
        out_dir (str | Path | None): Where cell checkpoints go; None keeps
            everything in memory.
        resume (bool): Reuse checkpoints of finished cells in ``out_dir``.
        progress (bool): Show per-cell progress bars.

    Returns:
        StudySummary: One CellSummary per (cell, reported strategy).

    Raises:
        CheckpointError: If ``resume`` meets a corrupt checkpoint.

    Example:
        >>> config = StudyConfig(scenarios=(1,), psi_grid=(0.1,), replications=20)
        >>> summary = run_study(config)
        >>> summary.summary_frame()[["strategy", "sce_rate"]]
    """
    out_path = Path(out_dir) if out_dir is not None else None
    cells = config.cells()
    logger.info(
        f"Study of {len(cells)} cells x {config.replications} replications "
        f"(jobs={config.jobs}, seed={config.master_seed})"
    )

    results = []
    for index, cell in enumerate(cells, start=1):
        existing = read_checkpoint(out_path, cell) if (resume and out_path) else None
        if existing is not None:
            logger.info(f"[{index}/{len(cells)}] {cell.key}: resumed from checkpoint")
            results.append(existing)
            continue
        logger.info(f"[{index}/{len(cells)}] {cell.key}: running")
        result = run_cell(cell, config, progress=progress)
        if out_path is not None:
            write_checkpoint(out_path, result)
        results.append(result)

    return StudySummary(cells=results, provenance=_provenance(config, results))


def write_study_outputs(summary: StudySummary, out_dir: str | Path) -> list[Path]:
    """Write summary.csv, provenance.json and, if kept, per_site.csv."""
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    written = []

    summary_path = out_path / SUMMARY_FILE
    summary.summary_frame().to_csv(summary_path, index=False, encoding="utf-8")
    written.append(summary_path)

    per_site = summary.per_site_frame()
    if not per_site.empty:
        per_site_path = out_path / PER_SITE_FILE
        per_site.to_csv(per_site_path, index=False, encoding="utf-8")
        written.append(per_site_path)

    provenance_path = out_path / PROVENANCE_FILE
    with open(provenance_path, "w", encoding="utf-8") as f:
        json.dump(summary.provenance, f, indent=2, default=str)
    written.append(provenance_path)

    logger.info(f"Wrote {', '.join(p.name for p in written)} to {out_path}")
    return written
