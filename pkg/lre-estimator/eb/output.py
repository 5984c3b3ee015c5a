"""Per-site empirical-Bayes output table."""

from pathlib import Path

import numpy as np
import pandas as pd

from eb.posterior import InterceptPosteriors, SlopePosteriors

EB_COLUMNS = ("site", "eta0_star", "eta0_postvar", "v1_star", "v1_postvar", "lambda11")


def eb_frame(
    slopes: SlopePosteriors, step_one: InterceptPosteriors | None = None
) -> pd.DataFrame:
    """Frame with one row per site; Step-1 columns are NaN without Step 1."""
    n_sites = len(slopes.site_ids)
    missing = np.full(n_sites, np.nan)
    return pd.DataFrame(
        {
            "site": list(slopes.site_ids),
            "eta0_star": step_one.eta0_star if step_one else missing,
            "eta0_postvar": step_one.post_var if step_one else missing,
            "v1_star": slopes.v1_star,
            "v1_postvar": slopes.post_var,
            "lambda11": slopes.lambda11,
        },
        columns=list(EB_COLUMNS),
    )


def write_eb_csv(
    path: str | Path,
    slopes: SlopePosteriors,
    step_one: InterceptPosteriors | None = None,
) -> None:
    eb_frame(slopes, step_one).to_csv(path, index=False, encoding="utf-8")
