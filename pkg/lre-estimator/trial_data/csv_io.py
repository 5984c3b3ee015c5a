"""
CSV ingestion and emission for multisite trial data.

Individual file columns: ``site,z,y[,x1,...,xk]``. Site-covariate file
columns: ``site,phi1,...,phim``. Both are UTF-8, comma-delimited, with a
header row and ``.`` as the decimal point. Line numbers in error messages
count the header as line 1.
"""

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from trial_data.models import TrialDataset
from utils.errors import CsvParseError, DatasetValidationError, SchemaError
from utils.logging import get_logger

logger = get_logger(__name__)

HEADER_LINES = 1
_PANDAS_LINE = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class CsvSchema:
    """Column names used when reading an individual-level file.

    Attributes:
        site (str): Site identifier column.
        z (str): Treatment indicator column.
        y (str): Outcome column.
        covariates (tuple[str, ...] | None): Individual covariate columns, in
            order. None means "every remaining column".
        site_column (str): Site identifier column in the site-covariate file.
    """

    site: str = "site"
    z: str = "z"
    y: str = "y"
    covariates: tuple[str, ...] | None = None
    site_column: str = "site"


def _read_frame(path: Path) -> pd.DataFrame:
    if not path.exists():
        msg = f"CSV file '{path}' not found"
        raise CsvParseError(msg)
    try:
        return pd.read_csv(
            path, dtype=str, keep_default_na=False, encoding="utf-8", sep=","
        )
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        line = int(match.group(1)) if match else None
        msg = f"Malformed row in '{path}'" + (f" at line {line}" if line else "")
        raise CsvParseError(f"{msg}: {e}", line=line) from e
    except pd.errors.EmptyDataError as e:
        msg = f"CSV file '{path}' is empty; a header row is required"
        raise CsvParseError(msg, line=1) from e


def _line_numbers(mask: np.ndarray) -> list[int]:
    return [int(i) + HEADER_LINES + 1 for i in np.flatnonzero(mask)]


def _numeric_column(frame: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    raw = frame[column].str.strip()
    missing = (raw == "").to_numpy()
    if missing.any():
        lines = _line_numbers(missing)
        msg = f"Missing value in column '{column}' of '{path}' at lines {lines}"
        raise CsvParseError(msg, line=lines[0])
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        lines = _line_numbers(bad)
        msg = f"Non-numeric value in column '{column}' of '{path}' at lines {lines}"
        raise CsvParseError(msg, line=lines[0])
    return values


def _require_columns(frame: pd.DataFrame, columns: list[str], path: Path) -> None:
    absent = [c for c in columns if c not in frame.columns]
    if absent:
        msg = f"Columns {absent} not found in header of '{path}'"
        raise SchemaError(msg)


def load_csv(
    path: str | Path,
    schema: CsvSchema | None = None,
    site_covariate_path: str | Path | None = None,
) -> TrialDataset:
    """Read and validate a multisite trial from CSV files.

    Args:
        path (str | Path): Individual-level file.
        schema (CsvSchema | None): Column names; defaults to ``site,z,y`` with
            every remaining column used as an individual covariate.
        site_covariate_path (str | Path | None): Site-level covariate file. When
            None, sites carry no covariates and are ordered by first appearance.

    Returns:
        TrialDataset: The validated dataset.

    Raises:
        CsvParseError: Malformed row, missing y/z/covariate, non-numeric value.
        SchemaError: Missing columns or a covariate-length mismatch.
        DatasetValidationError: A site lacks an arm, a record names an unknown
            site, or fewer than two sites are present.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    frame = _read_frame(path)
    _require_columns(frame, [schema.site, schema.z, schema.y], path)

    covariates = (
        list(schema.covariates)
        if schema.covariates is not None
        else [c for c in frame.columns if c not in (schema.site, schema.z, schema.y)]
    )
    _require_columns(frame, covariates, path)

    sites = frame[schema.site].str.strip()
    if (sites == "").any():
        lines = _line_numbers((sites == "").to_numpy())
        msg = f"Missing site identifier in '{path}' at lines {lines}"
        raise CsvParseError(msg, line=lines[0])

    z = _numeric_column(frame, schema.z, path)
    not_binary = ~np.isin(z, (0.0, 1.0))
    if not_binary.any():
        lines = _line_numbers(not_binary)
        msg = f"Treatment indicator must be 0 or 1 in '{path}' at lines {lines}"
        raise CsvParseError(msg, line=lines[0])
    y = _numeric_column(frame, schema.y, path)
    x = np.column_stack(
        [_numeric_column(frame, c, path) for c in covariates]
        or [np.zeros((len(frame), 0))]
    )

    if site_covariate_path is not None:
        site_path = Path(site_covariate_path)
        site_frame = _read_frame(site_path)
        _require_columns(site_frame, [schema.site_column], site_path)
        site_ids = site_frame[schema.site_column].str.strip().tolist()
        if len(set(site_ids)) != len(site_ids):
            msg = f"Site covariate file '{site_path}' lists a site more than once"
            raise SchemaError(msg)
        phi_names = [c for c in site_frame.columns if c != schema.site_column]
        phi_x = np.column_stack(
            [_numeric_column(site_frame, c, site_path) for c in phi_names]
            or [np.zeros((len(site_frame), 0))]
        )
    else:
        site_ids = list(dict.fromkeys(sites.tolist()))
        phi_names = []
        phi_x = np.zeros((len(site_ids), 0))

    index = {site_id: j for j, site_id in enumerate(site_ids)}
    unknown = sorted(set(sites) - set(index))
    if unknown:
        msg = f"Sites {unknown} appear in '{path}' but not in the site covariate file"
        raise DatasetValidationError(msg, site_id=unknown[0])

    dataset = TrialDataset.from_arrays(
        site_ids=site_ids,
        site_idx=sites.map(index).to_numpy(dtype=np.int64),
        z=z.astype(np.int8),
        y=y,
        x=x,
        phi_x=phi_x,
        covariate_names=covariates,
        site_covariate_names=phi_names,
    )
    logger.info(f"Loaded trial data from {path}: {dataset.describe()}")
    return dataset


def write_csv(
    dataset: TrialDataset,
    path: str | Path,
    site_covariate_path: str | Path | None = None,
) -> None:
    """Write a dataset in the format :func:`load_csv` reads.

    Floats are written with round-trip precision, so reloading reproduces the
    sufficient statistics to machine precision.
    """
    path = Path(path)
    frame = pd.DataFrame(
        {
            "site": np.asarray(dataset.site_ids, dtype=object)[dataset.site_idx],
            "z": dataset.z.astype(int),
            "y": dataset.y,
        }
    )
    for k, name in enumerate(dataset.covariate_names):
        frame[name] = dataset.x[:, k]
    frame.to_csv(path, index=False, encoding="utf-8")

    if site_covariate_path is not None:
        site_frame = pd.DataFrame({"site": list(dataset.site_ids)})
        for k, name in enumerate(dataset.site_covariate_names):
            site_frame[name] = dataset.phi_x[:, k]
        site_frame.to_csv(site_covariate_path, index=False, encoding="utf-8")
    logger.debug(f"Wrote trial data to {path}")
