"""Multisite trial data: immutable model, CSV I/O and sufficient statistics."""

from trial_data.csv_io import CsvSchema, load_csv, write_csv
from trial_data.models import (
    IndividualRecord,
    SiteCovariates,
    SiteSufficientStats,
    TrialDataset,
)
from trial_data.summary import (
    ScalingUnit,
    StatsArrays,
    control_sample_means,
    scaling_unit,
    site_covariate_matrix,
    summarize_arrays,
    summarize_sites,
)

__all__ = [
    "CsvSchema",
    "IndividualRecord",
    "ScalingUnit",
    "SiteCovariates",
    "SiteSufficientStats",
    "StatsArrays",
    "TrialDataset",
    "control_sample_means",
    "load_csv",
    "scaling_unit",
    "site_covariate_matrix",
    "summarize_arrays",
    "summarize_sites",
    "write_csv",
]
