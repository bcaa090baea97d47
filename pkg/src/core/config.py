"""
Runtime defaults from the environment and the run-configuration file loader.
Precedence for every run setting: CLI flag > config file > environment > built-in default.
"""

import configparser
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

# Load environment variables from .env file
import dotenv
dotenv.load_dotenv()

from pydantic import ValidationError

from src.core.errors import ConfigError
from src.core.schema import RunConfig
from util.logging import log_config_issue

# Process-level defaults (raw strings; integers are parsed where they are used)
THREADS = os.getenv("RYDSPEC_THREADS", "1")
OUT_DIR = os.getenv("RYDSPEC_OUT_DIR", "./out")
LOG_LEVEL = os.getenv("RYDSPEC_LOG_LEVEL", "INFO")

# Velocity quadrature defaults
GRID_METHOD = os.getenv("RYDSPEC_GRID_METHOD", "quadrature")  # quadrature|analytic|weak_probe
BASE_POINTS = os.getenv("RYDSPEC_BASE_POINTS", "2001")
WINDOW_POINTS = os.getenv("RYDSPEC_WINDOW_POINTS", "401")

# Plots are opt-in
PLOT_DEFAULT = os.getenv("RYDSPEC_PLOT", "false").lower() == "true"

VERSION = "1.0.0"


def _env_int(name: str, default: str) -> int:
    raw = os.getenv(name, default)
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got '{raw}'", field=name) from None


def get_threads() -> int:
    """Get default worker thread count."""
    return _env_int("RYDSPEC_THREADS", THREADS)


def get_out_dir() -> str:
    """Get default output directory."""
    return os.getenv("RYDSPEC_OUT_DIR", OUT_DIR)


def get_grid_defaults() -> Dict[str, Any]:
    """Get grid policy defaults (method, base_points, window_points)."""
    return {
        "method": os.getenv("RYDSPEC_GRID_METHOD", GRID_METHOD),
        "base_points": _env_int("RYDSPEC_BASE_POINTS", BASE_POINTS),
        "window_points": _env_int("RYDSPEC_WINDOW_POINTS", WINDOW_POINTS),
    }


def validate_runtime_config() -> List[str]:
    """Validate environment defaults and return any issues."""
    issues = []

    method = os.getenv("RYDSPEC_GRID_METHOD", GRID_METHOD)
    if method not in ["quadrature", "analytic", "weak_probe"]:
        issues.append(f"Invalid RYDSPEC_GRID_METHOD: {method}")

    for name, default, minimum in (("RYDSPEC_BASE_POINTS", BASE_POINTS, 64),
                                   ("RYDSPEC_WINDOW_POINTS", WINDOW_POINTS, 16),
                                   ("RYDSPEC_THREADS", THREADS, 1)):
        try:
            if _env_int(name, default) < minimum:
                issues.append(f"{name} must be >= {minimum}")
        except ConfigError as e:
            issues.append(str(e))

    if LOG_LEVEL.upper() not in ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]:
        issues.append(f"Invalid RYDSPEC_LOG_LEVEL: {LOG_LEVEL}")

    return issues


def read_config_file(path: Optional[Path]) -> Dict[str, Dict[str, str]]:
    """Read a sectioned key = value file into nested dicts of raw strings."""
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", field="--config")

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}", field="--config") from e

    return {section: dict(parser.items(section)) for section in parser.sections()}


def parse_overrides(pairs: Iterable[str]) -> Dict[str, Dict[str, str]]:
    """Turn ["section.key=value", ...] into nested dicts."""
    overrides: Dict[str, Dict[str, str]] = {}
    for pair in pairs or []:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got '{pair}'", field="--set")
        dotted, value = pair.split("=", 1)
        section, key = dotted.strip().split(".", 1)
        overrides.setdefault(section, {})[key.strip()] = value.strip()
    return overrides


def _merge(base: Dict[str, Dict[str, Any]], top: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    merged = {section: dict(values) for section, values in base.items()}
    for section, values in top.items():
        merged.setdefault(section, {}).update(values)
    return merged


def environment_layer() -> Dict[str, Dict[str, Any]]:
    """Environment defaults expressed as config sections."""
    return {
        "grid": get_grid_defaults(),
        "run": {"threads": get_threads()},
        "output": {"out_dir": get_out_dir(), "plot": PLOT_DEFAULT},
    }


def load_run_config(path: Optional[Path] = None, overrides: Iterable[str] = (),
                    flags: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    """Assemble and validate a RunConfig from every layer."""
    raw = _merge(environment_layer(), read_config_file(path))
    raw = _merge(raw, parse_overrides(overrides))
    raw = _merge(raw, flags or {})

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "config"
        message = first["msg"]
        log_config_issue(field, message)
        raise ConfigError(message, field=field) from e
