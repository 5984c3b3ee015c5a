"""
Exception hierarchy for the LRE estimator.

Every error the library raises on purpose derives from :class:`LreError`, so
the command-line layer can turn them into exit statuses with one ``except``.
Model non-convergence is deliberately absent: fits report it through their
``converged`` flag instead of raising.
"""


class LreError(Exception):
    """Base class for all estimator errors."""


class CsvParseError(LreError):
    """Raised when an input CSV row cannot be parsed.

    Attributes:
        line (int | None): 1-based line number in the file (header is line 1).
    """

    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(message)
        self.line = line


class DatasetValidationError(LreError):
    """Raised when a dataset violates a structural rule, e.g. a missing arm.

    Attributes:
        site_id (str | None): The offending site, when one can be named.
    """

    def __init__(self, message: str, site_id: str | None = None) -> None:
        super().__init__(message)
        self.site_id = site_id


class SchemaError(LreError):
    """Raised when column layout or covariate lengths are inconsistent."""


class DomainError(LreError):
    """Raised when a numeric routine receives parameters outside its domain."""


class RankError(LreError):
    """Raised when a fixed-effect design is rank deficient.

    Attributes:
        columns (tuple[str, ...]): Names of the columns that are collinear with
            the columns preceding them.
    """

    def __init__(self, message: str, columns: tuple[str, ...] = ()) -> None:
        super().__init__(message)
        self.columns = columns


class UsageError(LreError):
    """Raised when a caller combines options that cannot work together."""


class SpecificationError(LreError):
    """Raised when a constructed identification world is malformed."""


class CheckpointError(LreError):
    """Raised when a study checkpoint cannot be read back.

    Attributes:
        cell (str): Key of the cell whose checkpoint is corrupt.
    """

    def __init__(self, message: str, cell: str) -> None:
        super().__init__(message)
        self.cell = cell
