"""
Persistence of synthetic ground truth.

Truth is written as ``truth.csv`` (one row per site) plus a JSON sidecar
(``truth.json``) holding the scalars and provenance the rows cannot carry.
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd

from simgen.generator import SyntheticTruth
from utils.errors import SchemaError
from utils.logging import get_logger

logger = get_logger(__name__)

TRUTH_COLUMNS = (
    "site",
    "n",
    "theta",
    "delta",
    "mu_x1",
    "mu_x2",
    "mu_u1",
    "mu_u2",
    "true_tier",
)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_truth(truth: SyntheticTruth, path: str | Path) -> None:
    """Write truth rows to ``path`` and scalars to the ``.json`` sidecar."""
    path = Path(path)
    frame = pd.DataFrame(
        {
            "site": list(truth.site_ids),
            "n": truth.sizes,
            "theta": truth.theta,
            "delta": truth.delta,
            "mu_x1": truth.mu_x[:, 0],
            "mu_x2": truth.mu_x[:, 1],
            "mu_u1": truth.mu_u[:, 0],
            "mu_u2": truth.mu_u[:, 1],
            "true_tier": truth.true_tier,
        }
    )
    frame.to_csv(path, index=False, encoding="utf-8")
    sidecar = {
        "sigma": truth.sigma,
        "scenario": truth.scenario,
        "psi_std": truth.psi_std,
        "metadata": truth.metadata,
    }
    with open(_sidecar(path), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2)
    logger.debug(f"Wrote truth for {truth.J} sites to {path}")


def load_truth(path: str | Path) -> SyntheticTruth:
    """Read truth written by :func:`write_truth`.

    Raises:
        SchemaError: If columns are missing or the sidecar is absent.
    """
    path = Path(path)
    sidecar_path = _sidecar(path)
    if not path.exists() or not sidecar_path.exists():
        msg = f"Truth file '{path}' or its sidecar '{sidecar_path}' not found"
        raise SchemaError(msg)

    frame = pd.read_csv(path, dtype={"site": str})
    absent = [c for c in TRUTH_COLUMNS if c not in frame.columns]
    if absent:
        msg = f"Truth file '{path}' lacks columns {absent}"
        raise SchemaError(msg)
    with open(sidecar_path, encoding="utf-8") as f:
        sidecar = json.load(f)

    return SyntheticTruth(
        site_ids=tuple(frame["site"].astype(str)),
        sizes=frame["n"].to_numpy(dtype=np.int64),
        theta=frame["theta"].to_numpy(dtype=float),
        delta=frame["delta"].to_numpy(dtype=float),
        mu_x=frame[["mu_x1", "mu_x2"]].to_numpy(dtype=float),
        mu_u=frame[["mu_u1", "mu_u2"]].to_numpy(dtype=float),
        true_tier=frame["true_tier"].to_numpy(dtype=np.int64),
        sigma=float(sidecar["sigma"]),
        scenario=int(sidecar["scenario"]),
        psi_std=float(sidecar["psi_std"]),
        metadata=dict(sidecar.get("metadata", {})),
    )
