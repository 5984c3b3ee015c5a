"""Per-site estimate tables."""

from collections.abc import Iterable
from pathlib import Path

import pandas as pd

from metrics.tiers import MIN_SITES_FOR_TIERS, classify_tiers
from strategies.estimate import StrategyResult

ESTIMATE_COLUMNS = ("site", "strategy", "point", "post_var")


def estimates_frame(
    results: Iterable[StrategyResult], with_tier: bool = False
) -> pd.DataFrame:
    """Stack strategy results into ``site,strategy,point,post_var[,tier]`` rows.

    ``post_var`` is empty for ITT and ITT_ADJ; ``tier`` is the 30/40/30 tier
    of each point within its strategy, left empty below three sites.
    """
    frames = []
    for result in results:
        frame = pd.DataFrame(
            {
                "site": list(result.site_ids),
                "strategy": result.strategy.value,
                "point": result.points,
                "post_var": result.post_var if result.post_var is not None else None,
            }
        )
        if with_tier and len(result.points) >= MIN_SITES_FOR_TIERS:
            frame["tier"] = classify_tiers(result.points)
        elif with_tier:
            frame["tier"] = pd.NA
        frames.append(frame)
    columns = [*ESTIMATE_COLUMNS, *(["tier"] if with_tier else [])]
    if not frames:
        return pd.DataFrame(columns=columns)
    return pd.concat(frames, ignore_index=True)[columns]


def write_estimates_csv(
    path: str | Path, results: Iterable[StrategyResult], with_tier: bool = False
) -> None:
    estimates_frame(results, with_tier).to_csv(path, index=False, encoding="utf-8")
