"""Monte Carlo study driver, consistency grid and report tables."""

from harness.cell import CellResult, draw_cell_truth, read_checkpoint, run_cell
from harness.config import (
    DEFAULT_SIZE_SETTINGS,
    CellSpec,
    ConsistencyConfig,
    SizeSetting,
    StudyConfig,
)
from harness.consistency import (
    ConsistencyRow,
    consistency_frame,
    run_consistency_grid,
    write_consistency_csv,
)
from harness.report import read_summary, render_report
from harness.study import StudySummary, run_study, write_study_outputs

__all__ = [
    "DEFAULT_SIZE_SETTINGS",
    "CellResult",
    "CellSpec",
    "ConsistencyConfig",
    "ConsistencyRow",
    "SizeSetting",
    "StudyConfig",
    "StudySummary",
    "consistency_frame",
    "draw_cell_truth",
    "read_checkpoint",
    "read_summary",
    "render_report",
    "run_cell",
    "run_consistency_grid",
    "run_study",
    "write_consistency_csv",
    "write_study_outputs",
]
