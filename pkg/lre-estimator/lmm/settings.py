"""Optimizer settings for the mixed-model fits (``estimation`` config section)."""

from dataclasses import dataclass, fields
from typing import Any

from utils.errors import SchemaError, UsageError

SUPPORTED_METHODS = ("ml",)


@dataclass(frozen=True)
class EstimationSettings:
    """Tolerances and limits of the variance-component optimizer.

    Attributes:
        max_iterations (int): Quasi-Newton iteration cap.
        ftol (float): Relative log-likelihood change required for convergence.
        gtol (float): Projected gradient (max-abs, per-site mean scale)
            required for convergence.
        boundary_tol (float): Variances below this multiple of the residual
            variance are reported as exactly 0 and flagged.
        method (str): Estimation method; only ``"ml"`` is implemented.
    """

    max_iterations: int = 500
    ftol: float = 1e-10
    gtol: float = 1e-6
    boundary_tol: float = 1e-8
    method: str = "ml"

    def __post_init__(self) -> None:
        if self.method.lower() not in SUPPORTED_METHODS:
            msg = (
                f"Estimation method '{self.method}' is not implemented; "
                f"supported: {', '.join(SUPPORTED_METHODS)}"
            )
            raise UsageError(msg)
        if self.max_iterations < 1:
            msg = f"max_iterations must be at least 1; got {self.max_iterations}"
            raise UsageError(msg)

    @classmethod
    def from_config(cls, section: dict[str, Any] | None) -> "EstimationSettings":
        """Build settings from the ``estimation`` config section.

        Raises:
            SchemaError: If the section names an unknown key.
            UsageError: If the method is not ``ml`` (REML is not implemented).
        """
        section = section or {}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(section) - known)
        if unknown:
            msg = f"Unknown estimation settings: {', '.join(unknown)}"
            raise SchemaError(msg)
        return cls(**section)


DEFAULT_SETTINGS = EstimationSettings()
