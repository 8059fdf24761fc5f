# In DynamicEmulation/config.py
"""
Builds ExperimentConfig objects from key=value experiment files and the environment.
"""
import os
from dataclasses import fields
from pathlib import Path
from typing import Optional, Union

from dotenv import dotenv_values, find_dotenv, load_dotenv

from .driver import ExperimentConfig
from .exceptions import ConfigError

WORKERS_ENV = "DYNEMU_WORKERS"
_PATH_KEYS = ("design_path", "response_path", "output")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(key: str, raw: str) -> bool:
    value = raw.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ConfigError(f"{key.upper()} must be a boolean, got '{raw}'.")


def _parse_ratio(key: str, raw: str):
    parts = raw.replace(",", ":").split(":")
    try:
        ratio = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key.upper()} must look like '4:1', got '{raw}'.") from None
    if len(ratio) != 2:
        raise ConfigError(f"{key.upper()} must have exactly two parts, got '{raw}'.")
    return ratio


def _coerce(key: str, raw: str, default):
    """Converts a raw string to the type of the field's default value."""
    if raw is None or raw.strip() == "":
        return None
    raw = raw.strip()
    if isinstance(default, bool):
        return _parse_bool(key, raw)
    if isinstance(default, tuple):
        return _parse_ratio(key, raw)
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key.upper()} must be a number, got '{raw}'.") from None
    return raw


# Optional int fields whose default is None.
_INT_KEYS = {"length", "n0", "m_lim", "r_lim", "workers"}


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Reads an experiment file of KEY=value lines (keys case-insensitive).

    Relative dataset and output paths are resolved against the file's directory.

    Raises:
        ConfigError: unknown key, unparsable value or inconsistent configuration.
        FileNotFoundError: the file does not exist.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(2, "Config file not found", str(path))

    defaults = ExperimentConfig()
    known = {f.name: getattr(defaults, f.name) for f in fields(ExperimentConfig)}
    values = {}
    for key, raw in dotenv_values(path).items():
        name = key.lower()
        if name not in known:
            raise ConfigError(f"Unknown configuration key '{key}' in {path}.")
        if name in _INT_KEYS:
            value = _coerce(key, raw, 0)
        else:
            value = _coerce(key, raw, known[name])
        if value is None and known[name] is not None and name != "simulator":
            raise ConfigError(f"{key.upper()} needs a value in {path}.")
        if value is not None and name in _PATH_KEYS and not Path(value).is_absolute():
            value = str(path.parent / value)
        values[name] = value

    if "simulator" not in values and ("design_path" in values or "response_path" in values):
        values["simulator"] = None
    config = ExperimentConfig(**values)
    config.validate()
    return config


def resolve_workers(config_value: Optional[int] = None) -> int:
    """Worker count: the config value if set, else DYNEMU_WORKERS (a local .env is read), else 1."""
    if config_value is not None:
        return int(config_value)
    load_dotenv(find_dotenv(usecwd=True))
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got '{raw}'.") from None
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be at least 1, got {workers}.")
    return workers
