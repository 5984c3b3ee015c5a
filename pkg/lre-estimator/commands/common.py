"""Helpers shared by the subcommands: flag parsing and provenance records."""

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

from harness.config import SizeSetting
from harness.study import software_versions
from lmm.settings import EstimationSettings
from strategies.ids import StrategyId
from utils.errors import UsageError
from utils.logging import get_logger

logger = get_logger(__name__)

PROVENANCE_FILE = "provenance.json"


@dataclass(frozen=True)
class CommandContext:
    """What every subcommand handler receives besides its parsed flags."""

    config: dict[str, Any]
    estimation: EstimationSettings
    argv: list[str] = field(default_factory=lambda: list(sys.argv[1:]))


def parse_n_range(value: str) -> tuple[int, int]:
    """``"LO:HI"`` to ``(LO, HI)``; argparse type for ``--n-range``."""
    try:
        low, high = (int(part) for part in value.split(":"))
    except ValueError as e:
        msg = f"--n-range must look like LO:HI; got '{value}'"
        raise argparse.ArgumentTypeError(msg) from e
    if not 1 <= low <= high:
        msg = f"--n-range needs 1 <= LO <= HI; got '{value}'"
        raise argparse.ArgumentTypeError(msg)
    return low, high


def parse_strategies(values: list[str] | None) -> tuple[StrategyId, ...] | None:
    """Repeated or comma-separated ``--strategy`` values; None if not given."""
    if not values:
        return None
    names = [name for value in values for name in value.split(",") if name.strip()]
    if not names:
        msg = "--strategy needs at least one strategy name"
        raise UsageError(msg)
    return tuple(dict.fromkeys(StrategyId.parse(name) for name in names))


def size_override(
    J: int | None,  # noqa: N803
    n_range: tuple[int, int] | None,
    default: SizeSetting,
) -> SizeSetting | None:
    """One size setting from ``--J``/``--n-range``; None when neither is given."""
    if J is None and n_range is None:
        return None
    low, high = n_range if n_range is not None else (default.n_low, default.n_high)
    return SizeSetting(J if J is not None else default.J, low, high)


def write_provenance(
    out_dir: Path,
    command: str,
    context: CommandContext,
    details: dict[str, Any],
    file_name: str = PROVENANCE_FILE,
) -> Path:
    """Record how a run was invoked next to its outputs."""
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "command": command,
        "argv": context.argv,
        "created": datetime.now(UTC).isoformat(timespec="seconds"),
        "estimation": asdict(context.estimation),
        "software": software_versions(),
        **details,
    }
    path = out_dir / file_name
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2, default=str)
    logger.debug(f"Wrote provenance to {path}")
    return path
