"""
Immutable data model for multisite trial data.

Individual records are held column-wise in numpy arrays (one entry per
person) while sites are addressed by a contiguous ``0..J-1`` index; opaque
site identifiers are only used at the edges (CSV files, reports).
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from utils.errors import DatasetValidationError, SchemaError

MIN_SITES = 2


@dataclass(frozen=True)
class IndividualRecord:
    """One person in the trial.

    Attributes:
        site_id (str): Opaque site identifier.
        z (int): Treatment assignment, 0 (control) or 1 (treated).
        y (float): Observed outcome.
        x (tuple[float, ...]): Individual-level covariates, possibly empty.
    """

    site_id: str
    z: int
    y: float
    x: tuple[float, ...] = ()


@dataclass(frozen=True)
class SiteCovariates:
    """Site-level covariate values (the observed ecological conditions)."""

    site_id: str
    phi_x: tuple[float, ...] = ()


@dataclass(frozen=True)
class SiteSufficientStats:
    """Per-site, per-arm counts, means and within-arm sums of squares.

    ``ybar1 - ybar0`` is the site's OLS intent-to-treat estimate.
    """

    site_id: str
    n0: int
    n1: int
    ybar0: float
    ybar1: float
    ss0: float
    ss1: float

    @property
    def itt(self) -> float:
        return self.ybar1 - self.ybar0


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Validated multisite trial data.

    Construct through :meth:`from_records` or :meth:`from_arrays`; both run
    the same validation. All arrays are read-only after construction.

    Attributes:
        site_ids (tuple[str, ...]): Site identifiers ordered by site index.
        site_idx (np.ndarray): Site index per record, shape (n,).
        z (np.ndarray): Treatment indicator per record, shape (n,).
        y (np.ndarray): Outcome per record, shape (n,).
        x (np.ndarray): Individual covariates, shape (n, k).
        phi_x (np.ndarray): Site covariates ordered by site index, shape (J, m).
        covariate_names (tuple[str, ...]): Names of the k individual covariates.
        site_covariate_names (tuple[str, ...]): Names of the m site covariates.
        extra_site_covariates (dict[str, np.ndarray]): Optional named per-site
            columns that are not part of Phi_X (e.g. sample means of X kept for
            robustness experiments).
    """

    site_ids: tuple[str, ...]
    site_idx: np.ndarray
    z: np.ndarray
    y: np.ndarray
    x: np.ndarray
    phi_x: np.ndarray
    covariate_names: tuple[str, ...] = ()
    site_covariate_names: tuple[str, ...] = ()
    extra_site_covariates: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for array in (self.site_idx, self.z, self.y, self.x, self.phi_x):
            _frozen(array)
        for array in self.extra_site_covariates.values():
            _frozen(array)
        self._validate()

    @classmethod
    def from_arrays(
        cls,
        site_ids: Sequence[str],
        site_idx: np.ndarray,
        z: np.ndarray,
        y: np.ndarray,
        x: np.ndarray | None = None,
        phi_x: np.ndarray | None = None,
        covariate_names: Sequence[str] | None = None,
        site_covariate_names: Sequence[str] | None = None,
        extra_site_covariates: dict[str, np.ndarray] | None = None,
    ) -> "TrialDataset":
        """Build a dataset from column arrays (the generator's fast path)."""
        n = len(y)
        n_sites = len(site_ids)
        x_arr = np.zeros((n, 0)) if x is None else np.asarray(x, dtype=float)
        phi_arr = (
            np.zeros((n_sites, 0)) if phi_x is None else np.asarray(phi_x, dtype=float)
        )
        if x_arr.ndim != 2 or x_arr.shape[0] != n:  # noqa: PLR2004
            msg = f"Individual covariates must have shape (n, k); got {x_arr.shape}"
            raise SchemaError(msg)
        if phi_arr.ndim != 2 or phi_arr.shape[0] != n_sites:  # noqa: PLR2004
            msg = f"Site covariates must have shape (J, m); got {phi_arr.shape}"
            raise SchemaError(msg)
        return cls(
            site_ids=tuple(str(s) for s in site_ids),
            site_idx=np.asarray(site_idx, dtype=np.int64).copy(),
            z=np.asarray(z, dtype=np.int8).copy(),
            y=np.asarray(y, dtype=float).copy(),
            x=x_arr.copy(),
            phi_x=phi_arr.copy(),
            covariate_names=tuple(
                covariate_names or (f"x{k + 1}" for k in range(x_arr.shape[1]))
            ),
            site_covariate_names=tuple(
                site_covariate_names
                or (f"phi{k + 1}" for k in range(phi_arr.shape[1]))
            ),
            extra_site_covariates={
                name: np.asarray(values, dtype=float).copy()
                for name, values in (extra_site_covariates or {}).items()
            },
        )

    @classmethod
    def from_records(
        cls,
        records: Iterable[IndividualRecord],
        site_covariates: Iterable[SiteCovariates],
        covariate_names: Sequence[str] | None = None,
        site_covariate_names: Sequence[str] | None = None,
    ) -> "TrialDataset":
        """Build a dataset from record objects, validating every invariant.

        Raises:
            SchemaError: If covariate lengths differ between records or sites.
            DatasetValidationError: If a record names an unknown site, a site
                lacks an arm, or fewer than two sites are present.
        """
        records = list(records)
        site_covariates = list(site_covariates)

        site_ids = [s.site_id for s in site_covariates]
        if len(set(site_ids)) != len(site_ids):
            msg = "Site covariates list a site more than once"
            raise SchemaError(msg)
        index = {site_id: j for j, site_id in enumerate(site_ids)}

        widths = {len(s.phi_x) for s in site_covariates}
        if len(widths) > 1:
            msg = f"Site covariate lengths differ across sites: {sorted(widths)}"
            raise SchemaError(msg)
        x_widths = {len(r.x) for r in records}
        if len(x_widths) > 1:
            msg = f"Individual covariate lengths differ across records: {sorted(x_widths)}"
            raise SchemaError(msg)

        for r in records:
            if r.site_id not in index:
                msg = f"Record refers to site '{r.site_id}' with no site covariates"
                raise DatasetValidationError(msg, site_id=r.site_id)

        k = x_widths.pop() if x_widths else 0
        m = widths.pop() if widths else 0
        return cls.from_arrays(
            site_ids=site_ids,
            site_idx=np.array([index[r.site_id] for r in records], dtype=np.int64),
            z=np.array([r.z for r in records], dtype=np.int8),
            y=np.array([r.y for r in records], dtype=float),
            x=np.array([r.x for r in records], dtype=float).reshape(len(records), k),
            phi_x=np.array([s.phi_x for s in site_covariates], dtype=float).reshape(
                len(site_covariates), m
            ),
            covariate_names=covariate_names,
            site_covariate_names=site_covariate_names,
        )

    def _validate(self) -> None:
        n = self.y.shape[0]
        if not (self.site_idx.shape == self.z.shape == (n,)):
            msg = "site_idx, z and y must all have one entry per record"
            raise SchemaError(msg)
        if len(self.covariate_names) != self.x.shape[1]:
            msg = "covariate_names does not match the individual covariate columns"
            raise SchemaError(msg)
        if len(self.site_covariate_names) != self.phi_x.shape[1]:
            msg = "site_covariate_names does not match the site covariate columns"
            raise SchemaError(msg)
        if self.J < MIN_SITES:
            msg = f"A multisite trial needs at least {MIN_SITES} sites; got {self.J}"
            raise DatasetValidationError(msg)
        if n and (self.site_idx.min() < 0 or self.site_idx.max() >= self.J):
            msg = "Record site index outside 0..J-1"
            raise DatasetValidationError(msg)
        if not np.isin(self.z, (0, 1)).all():
            msg = "Treatment indicator must be 0 or 1"
            raise DatasetValidationError(msg)
        if not np.isfinite(self.y).all():
            msg = "Outcomes must be finite"
            raise DatasetValidationError(msg)
        if not (np.isfinite(self.x).all() and np.isfinite(self.phi_x).all()):
            msg = "Covariates must be finite; missing values are not supported"
            raise DatasetValidationError(msg)

        n1 = np.bincount(self.site_idx, weights=self.z, minlength=self.J)
        n_all = np.bincount(self.site_idx, minlength=self.J)
        for j in range(self.J):
            if n1[j] < 1 or n_all[j] - n1[j] < 1:
                arm = "control" if n1[j] >= 1 else "treated"
                msg = f"Site '{self.site_ids[j]}' has no {arm} records"
                raise DatasetValidationError(msg, site_id=self.site_ids[j])

    @property
    def J(self) -> int:  # noqa: N802
        return len(self.site_ids)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @cached_property
    def site_index(self) -> dict[str, int]:
        return {site_id: j for j, site_id in enumerate(self.site_ids)}

    @cached_property
    def records(self) -> tuple[IndividualRecord, ...]:
        """Record objects, built on first access (O(n) Python objects)."""
        return tuple(
            IndividualRecord(
                site_id=self.site_ids[j],
                z=int(z),
                y=float(y),
                x=tuple(float(v) for v in row),
            )
            for j, z, y, row in zip(self.site_idx, self.z, self.y, self.x, strict=True)
        )

    @cached_property
    def site_covariates(self) -> tuple[SiteCovariates, ...]:
        return tuple(
            SiteCovariates(site_id=site_id, phi_x=tuple(float(v) for v in row))
            for site_id, row in zip(self.site_ids, self.phi_x, strict=True)
        )

    def with_outcomes(self, y: np.ndarray) -> "TrialDataset":
        """Copy of this dataset with the outcome column replaced."""
        return TrialDataset(
            site_ids=self.site_ids,
            site_idx=self.site_idx.copy(),
            z=self.z.copy(),
            y=np.asarray(y, dtype=float).copy(),
            x=self.x.copy(),
            phi_x=self.phi_x.copy(),
            covariate_names=self.covariate_names,
            site_covariate_names=self.site_covariate_names,
            extra_site_covariates={
                k: v.copy() for k, v in self.extra_site_covariates.items()
            },
        )

    def describe(self) -> str:
        """One-line summary used in logs and CLI output."""
        return (
            f"J={self.J} n={self.n} individual_covariates={len(self.covariate_names)} "
            f"site_covariates={len(self.site_covariate_names)}"
        )
