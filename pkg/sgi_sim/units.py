"""Unit-suffix normalization for scenario documents.

Config keys carry their unit as a suffix (``B0_gauss``, ``eta_gauss_per_um``,
``omega0_hz``). This module maps those suffixes to SI conversion factors
and splits keys into a base name and a unit.
"""

import math
import re
from typing import Optional

HBAR = 1.054571817e-34

# Suffix -> (dimension, factor to SI). Longer suffixes must be tried first,
# so the table is kept in matching order.
UNIT_SUFFIXES = {
    'gauss_per_um': ('field_gradient', 1e-4 / 1e-6),
    't_per_m': ('field_gradient', 1.0),
    'kg_m3': ('density', 1.0),
    'kg_m2': ('inertia', 1.0),
    'rad_s': ('angular_frequency', 1.0),
    'khz': ('angular_frequency', 2.0 * math.pi * 1e3),
    'hz': ('angular_frequency', 2.0 * math.pi),
    'gauss': ('field', 1e-4),
    'tesla': ('field', 1.0),
    'hbar': ('action', HBAR),
    'j_s': ('action', 1.0),
    'kg': ('mass', 1.0),
    'um': ('length', 1e-6),
    'nm': ('length', 1e-9),
    'm': ('length', 1.0),
    'ms': ('time', 1e-3),
    's': ('time', 1.0),
    'rad': ('angle', 1.0),
    'deg': ('angle', math.pi / 180.0),
    'k': ('temperature', 1.0),
}

_SUFFIX_PATTERNS = [
    (suffix, re.compile(r'^(?P<base>[A-Za-z][A-Za-z0-9]*(?:_[A-Za-z0-9]+)*?)_' + suffix + r'$'))
    for suffix in UNIT_SUFFIXES
]


def split_key(key: str) -> Optional[tuple[str, str]]:
    """Split a unit-suffixed key into (base, suffix).

    Args:
        key: Raw config key, e.g. ``eta_gauss_per_um``

    Returns:
        Tuple of base name and suffix, or None when no known suffix matches
    """
    if not key:
        return None
    k = str(key).strip()
    for suffix, pattern in _SUFFIX_PATTERNS:
        match = pattern.match(k)
        if match:
            return match.group('base'), suffix
    return None


def dimension_of(suffix: str) -> str:
    """Return the physical dimension a suffix stands for."""
    return UNIT_SUFFIXES[suffix][0]


def to_si(value: float, suffix: str) -> float:
    """Convert a value expressed in ``suffix`` units to SI."""
    return float(value) * UNIT_SUFFIXES[suffix][1]


def from_si(value: float, suffix: str) -> float:
    """Convert an SI value back to ``suffix`` units."""
    return float(value) / UNIT_SUFFIXES[suffix][1]
