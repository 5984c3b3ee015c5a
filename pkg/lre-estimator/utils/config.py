"""
Configuration loading for the LRE estimator.

Settings live in a YAML file (``settings/lre.yml``) with one section per
workflow. The loader searches the same kind of fallback locations the
project has always used, and an absent file simply means "use the built-in
defaults" because nothing in this tool needs a secret to run.

Example:
    Loading and reading a section::

        from utils.config import load_config, get_section
        config = load_config()
        study = get_section(config, "study")

Attributes:
    DEFAULT_CONFIG_PATH (Path): Location of the application-local config file.
    OUTPUT_DIR_ENV (str): Environment variable naming the default output dir.
"""

import os
from pathlib import Path
from typing import Any

import yaml

from utils.errors import SchemaError, UsageError
from utils.logging import get_logger

logger = get_logger(__name__)

app_root = Path(__file__).resolve().parent.parent

DEFAULT_CONFIG_PATH = app_root / "settings" / "lre.yml"
OUTPUT_DIR_ENV = "LRE_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"

KNOWN_SECTIONS = (
    "generator",
    "study",
    "consistency",
    "estimation",
    "output",
    "logging",
)


def _read_yaml(config_file: Path) -> dict[str, Any]:
    try:
        with open(config_file, encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        msg = f"Error parsing config file '{config_file}': {e}"
        raise SchemaError(msg) from e

    if not isinstance(data, dict):
        msg = f"Config file '{config_file}' must contain a mapping at top level"
        raise SchemaError(msg)

    unknown = sorted(set(data) - set(KNOWN_SECTIONS))
    if unknown:
        msg = f"Unknown config sections in '{config_file}': {', '.join(unknown)}"
        raise SchemaError(msg)
    return data


def load_config(config_path: str | Path | None = None) -> dict[str, Any]:
    """Load configuration from a YAML file with fallback locations.

    Args:
        config_path (str | Path | None): Explicit path to a YAML file. When
            None, the fallback locations are searched in order.

    Returns:
        dict[str, Any]: Parsed configuration; empty when no file was found.

    Raises:
        UsageError: If an explicit path was given and does not exist.
        SchemaError: If the file is not valid YAML or has unknown sections.

    Example:
        >>> config = load_config("my_study.yml")
        >>> config["study"]["replications"]
        500
    """
    if config_path is not None:
        config_file = Path(config_path).expanduser()
        if not config_file.exists():
            msg = f"Configuration file '{config_file}' not found"
            raise UsageError(msg)
        logger.info(f"Using config from: {config_file}")
        return _read_yaml(config_file)

    fallback_paths = [
        Path("~/.config/lre-estimator/lre.yml").expanduser(),
        DEFAULT_CONFIG_PATH,
    ]
    for fallback in fallback_paths:
        if fallback.exists():
            logger.info(f"Using config from: {fallback}")
            return _read_yaml(fallback)

    logger.debug("No configuration file found, using built-in defaults")
    return {}


def get_section(config: dict[str, Any], name: str) -> dict[str, Any]:
    """Return one config section, or an empty mapping when it is absent."""
    section = config.get(name) or {}
    if not isinstance(section, dict):
        msg = f"Config section '{name}' must be a mapping"
        raise SchemaError(msg)
    return section


def resolve_output_dir(flag_value: str | None, config: dict[str, Any]) -> Path:
    """Pick the output directory: flag, then env var, then config, then default.

    Args:
        flag_value (str | None): Value of ``--out`` if given.
        config (dict[str, Any]): Loaded configuration.

    Returns:
        Path: The directory to write into (not created here).
    """
    if flag_value:
        return Path(flag_value).expanduser()
    env_value = os.environ.get(OUTPUT_DIR_ENV)
    if env_value:
        return Path(env_value).expanduser()
    configured = get_section(config, "output").get("directory")
    return Path(configured or DEFAULT_OUTPUT_DIR).expanduser()


def merge_settings(
    defaults: dict[str, Any], section: dict[str, Any], overrides: dict[str, Any]
) -> dict[str, Any]:
    """Layer settings with precedence flags > config file > defaults.

    Keys in ``overrides`` whose value is None are treated as "flag not given".

    Raises:
        SchemaError: If the config section names a key the defaults lack.
    """
    unknown = sorted(set(section) - set(defaults))
    if unknown:
        msg = f"Unknown configuration keys: {', '.join(unknown)}"
        raise SchemaError(msg)
    merged = dict(defaults)
    merged.update(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged
