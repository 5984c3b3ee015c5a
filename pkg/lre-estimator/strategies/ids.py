"""Identifiers of the seven LRE estimation strategies."""

from enum import StrEnum

from utils.errors import UsageError


class StrategyId(StrEnum):
    """One of the candidate strategies.

    ``ME_ADJ_X_U`` is the infeasible benchmark: it adjusts for the true site
    means of the unobserved covariates and therefore needs the synthetic
    truth. Every other strategy works from the observed data only.
    """

    ITT = "ITT"
    ITT_ADJ = "ITT_ADJ"
    ME = "ME"
    ME_ADJ_X = "ME_ADJ_X"
    ME_ADJ_X_Y0 = "ME_ADJ_X_Y0"
    TWOSTEP = "TWOSTEP"
    ME_ADJ_X_U = "ME_ADJ_X_U"

    @property
    def requires_truth(self) -> bool:
        return self is StrategyId.ME_ADJ_X_U

    @property
    def is_mixed(self) -> bool:
        return self not in (StrategyId.ITT, StrategyId.ITT_ADJ)

    @classmethod
    def parse(cls, name: str) -> "StrategyId":
        """Case-insensitive lookup; ``2sme`` is accepted for TWOSTEP.

        Raises:
            UsageError: If the name matches no strategy.
        """
        key = name.strip().upper().replace("-", "_")
        if key == "2SME":
            return cls.TWOSTEP
        try:
            return cls(key)
        except ValueError as e:
            valid = ", ".join(s.value.lower() for s in cls)
            msg = f"Unknown strategy '{name}'; choose from {valid}"
            raise UsageError(msg) from e


ALL_STRATEGIES: tuple[StrategyId, ...] = tuple(StrategyId)
FEASIBLE_STRATEGIES: tuple[StrategyId, ...] = tuple(
    s for s in StrategyId if not s.requires_truth
)
