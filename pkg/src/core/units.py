"""
Unit boundary: the only place where 2*pi and the Celsius offset appear.

Inside the physics layer every rate and detuning is an angular frequency in
rad/s and every temperature is in kelvin. Files and flags use ordinary
frequencies in Hz and accept temperatures with a C or K suffix.
"""

import math
import re
from typing import Union

import numpy as np

from src.core.errors import DomainError

TWO_PI = 2.0 * math.pi
CELSIUS_OFFSET = 273.15

_TEMPERATURE_RE = re.compile(r"^\s*([-+]?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)\s*(°?\s*[CcKk])?\s*$")

ArrayLike = Union[float, np.ndarray]


def to_angular(hz: ArrayLike) -> ArrayLike:
    """Ordinary frequency in Hz -> angular frequency in rad/s."""
    return TWO_PI * hz


def to_hz(angular: ArrayLike) -> ArrayLike:
    """Angular frequency in rad/s -> ordinary frequency in Hz."""
    return angular / TWO_PI


def parse_temperature(text: Union[str, float, int]) -> float:
    """Parse '89C', '89 °C', '362.15K' or a bare number (kelvin) into kelvin."""
    if isinstance(text, (int, float)):
        kelvin = float(text)
    else:
        match = _TEMPERATURE_RE.match(text)
        if not match:
            raise DomainError(f"unrecognised temperature '{text}' (use e.g. 89C or 362.15K)")
        value = float(match.group(1))
        unit = (match.group(2) or "K").replace("°", "").strip().upper()
        kelvin = value + CELSIUS_OFFSET if unit == "C" else value
    if not kelvin > 0:
        raise DomainError(f"temperature must be > 0 K, got {kelvin} K")
    return kelvin
