"""Configuration file handling.

The config file is flat TOML: one ``key = value`` per line, keys named after
CLI option destinations. Flags beat the file, the file beats built-in
defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
from pathlib import Path
from typing import Iterable, Optional, Union

from dotenv import load_dotenv

try:
    # Python 3.11+
    import tomllib
except ImportError:
    # Python 3.9-3.10
    import tomli as tomllib

from .errors import UsageError

logger = logging.getLogger(__name__)

APP_NAME = "nonuniform_robust"
CONFIG_ENV = "NUROBUST_CONFIG"
WORKERS_ENV = "NUROBUST_WORKERS"
DEFAULT_WORKERS = 8


def get_config_path(explicit: Optional[str] = None) -> Path:
    """
    Resolve the config file location.

    ``explicit`` (the ``--config`` flag) wins, then ``$NUROBUST_CONFIG`` after
    loading ``.env``, then ``~/.config/nonuniform_robust/config.toml``.
    """
    if explicit:
        return Path(explicit).expanduser()
    load_dotenv()
    env = os.getenv(CONFIG_ENV)
    if env:
        return Path(env).expanduser()
    return Path.home() / ".config" / APP_NAME / "config.toml"


def load_config(path: Optional[Path] = None, required: bool = False) -> dict:
    """
    Read the flat config file.

    Raises
    ------
    UsageError
        If the file is malformed, holds tables, or is required but missing.
    """
    path = path or get_config_path()
    if not path.exists():
        if required:
            raise UsageError(f"Config file not found: {path}")
        return {}
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except (tomllib.TOMLDecodeError, OSError) as e:
        raise UsageError(
            f"Could not read config file {path}: {e}",
            suggestion="The config file is flat TOML: one `key = value` per line.",
        ) from e
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise UsageError(f"Config file {path} must be flat; found tables: {', '.join(nested)}")
    logger.debug("Loaded %d config keys from %s", len(data), path)
    return data


def apply_config_defaults(
    parsers: Union[argparse.ArgumentParser, Iterable[argparse.ArgumentParser]],
    values: dict,
) -> list[str]:
    """
    Install config values as parser defaults so explicit flags still win.

    Each parser only receives the keys it has an option for. Returns the keys
    that match no option in any parser; they are ignored with a warning.
    """
    if isinstance(parsers, argparse.ArgumentParser):
        parsers = [parsers]
    seen: set[str] = set()
    for parser in parsers:
        known = {action.dest for action in parser._actions}
        parser.set_defaults(**{k: v for k, v in values.items() if k in known})
        seen |= known
    unknown = [k for k in values if k not in seen]
    for key in unknown:
        logger.warning("Ignoring unknown config key '%s'", key)
    return unknown


def get_workers(flag: Optional[int] = None, values: Optional[dict] = None) -> int:
    """Thread-pool size from flag, config, ``$NUROBUST_WORKERS``, else 8."""
    if flag is not None:
        workers = flag
    elif values and "workers" in values:
        workers = values["workers"]
    else:
        load_dotenv()
        workers = os.getenv(WORKERS_ENV, DEFAULT_WORKERS)
    try:
        workers = int(workers)
    except (TypeError, ValueError) as e:
        raise UsageError(f"Worker count must be an integer, got {workers!r}") from e
    if workers < 1:
        raise UsageError("Worker count must be at least 1")
    return workers
