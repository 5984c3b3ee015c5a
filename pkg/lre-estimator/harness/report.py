"""Plain-text tables from a study's summary.csv."""

from pathlib import Path

import pandas as pd

from harness.study import CELL_COLUMNS, SUMMARY_COLUMNS
from utils.errors import SchemaError

REPORT_COLUMNS = (
    "strategy",
    "mean_bias",
    "sd_bias",
    "variance_ratio",
    "avg_rmse",
    "rmse_reduction",
    "sce_rate",
    "mce_rate",
    "nonconverged",
)
UNDEFINED_NOTE = (
    "-  undefined: needs at least two replications with varying ITT estimates"
)


def read_summary(path: str | Path) -> pd.DataFrame:
    """Load summary.csv and check it has the study's columns.

    Raises:
        SchemaError: If the file lacks a summary column.
    """
    frame = pd.read_csv(path)
    missing = [c for c in SUMMARY_COLUMNS if c not in frame.columns]
    if missing:
        msg = f"{path} is not a study summary; missing columns {missing}"
        raise SchemaError(msg)
    return frame


def render_report(summary: pd.DataFrame, digits: int = 4) -> str:
    """One titled table per (scenario, psi, size) cell, in file order.

    The output depends on nothing but ``summary``.
    """
    blocks = []
    for key, group in summary.groupby(list(CELL_COLUMNS), sort=False):
        scenario, psi, J, n_low, n_high = key
        title = f"Scenario {scenario} | psi = {psi:g} sigma | J = {J}, n in [{n_low}, {n_high}]"
        if bool(group["flagged"].any()):
            title += " | FLAGGED: non-convergence above 5%"
        table = group[list(REPORT_COLUMNS)].to_string(
            index=False, float_format=lambda v: f"{v:.{digits}f}", na_rep="-"
        )
        block = f"{title}\n{'=' * len(title)}\n{table}"
        if group[["sd_bias", "variance_ratio"]].isna().to_numpy().any():
            block += f"\n{UNDEFINED_NOTE}"
        blocks.append(block)
    return "\n\n".join(blocks) + "\n"
