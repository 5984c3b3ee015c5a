"""The seven LRE estimation strategies and the exact identification oracle."""

from strategies.estimate import LreEstimate, StrategyResult, estimate_lre, run_strategy
from strategies.ids import ALL_STRATEGIES, FEASIBLE_STRATEGIES, StrategyId
from strategies.oracle import OracleResidual, OracleSite, oracle_identification_check
from strategies.output import ESTIMATE_COLUMNS, estimates_frame, write_estimates_csv

__all__ = [
    "ALL_STRATEGIES",
    "ESTIMATE_COLUMNS",
    "FEASIBLE_STRATEGIES",
    "LreEstimate",
    "OracleResidual",
    "OracleSite",
    "StrategyId",
    "StrategyResult",
    "estimate_lre",
    "estimates_frame",
    "oracle_identification_check",
    "run_strategy",
    "write_estimates_csv",
]
