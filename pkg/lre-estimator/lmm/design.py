"""
Site-level fixed-effect designs and their rank check.

Every fixed-effect covariate in the mixed models is site-level, so a design
is a (J, q) matrix whose first column is the constant. In the random-slope
model the same columns enter the intercept part and, interacted with the
treatment indicator, the slope part.
"""

from collections.abc import Sequence

import numpy as np

from utils.errors import RankError, SchemaError

CONSTANT = "const"
ETA_COLUMN = "eta0_star"


def build_design(
    site_covariates: np.ndarray | None,
    n_sites: int,
    names: Sequence[str] | None = None,
    eta0_star: np.ndarray | None = None,
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Stack the constant, the site covariates and optionally eta0_star.

    Args:
        site_covariates (np.ndarray | None): Shape (J, m); None or m == 0 for
            an intercept-only design.
        n_sites (int): J.
        names (Sequence[str] | None): Names of the m covariate columns.
        eta0_star (np.ndarray | None): Step-1 posterior means, shape (J,).

    Returns:
        tuple[np.ndarray, tuple[str, ...]]: The (J, q) design and its column
            names, constant first and ``eta0_star`` last when present.

    Raises:
        SchemaError: If an input is not aligned with the J sites.
    """
    if site_covariates is None:
        covariates = np.zeros((n_sites, 0))
    else:
        covariates = np.asarray(site_covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, np.newaxis]
    if covariates.shape[0] != n_sites:
        msg = f"Site covariates have {covariates.shape[0]} rows for {n_sites} sites"
        raise SchemaError(msg)

    column_names = list(names or (f"phi{k + 1}" for k in range(covariates.shape[1])))
    if len(column_names) != covariates.shape[1]:
        msg = "Site covariate names do not match the covariate columns"
        raise SchemaError(msg)

    columns = [np.ones((n_sites, 1)), covariates]
    column_names = [CONSTANT, *column_names]
    if eta0_star is not None:
        eta = np.asarray(eta0_star, dtype=float)
        if eta.shape != (n_sites,):
            msg = f"eta0_star must have one value per site; got shape {eta.shape}"
            raise SchemaError(msg)
        columns.append(eta[:, np.newaxis])
        column_names.append(ETA_COLUMN)
    return np.hstack(columns), tuple(column_names)


def check_rank(design: np.ndarray, names: Sequence[str]) -> None:
    """Raise :class:`RankError` naming columns that add no rank.

    Columns are scaled to unit norm first so that covariates on very
    different scales do not trip the tolerance.
    """
    norms = np.linalg.norm(design, axis=0)
    degenerate = [names[i] for i in np.flatnonzero(norms == 0)]
    scaled = design / np.where(norms == 0, 1.0, norms)

    collinear = list(degenerate)
    rank = 0
    for i in range(scaled.shape[1]):
        if names[i] in degenerate:
            continue
        new_rank = np.linalg.matrix_rank(scaled[:, : i + 1])
        if new_rank == rank:
            collinear.append(names[i])
        rank = new_rank

    if collinear:
        msg = f"Site-level design is rank deficient; collinear columns: {collinear}"
        raise RankError(msg, columns=tuple(collinear))
