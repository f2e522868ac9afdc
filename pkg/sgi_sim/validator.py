"""Validation of scenario documents.

Checks section and key names, unit suffixes, value types and physical
ranges, and converts every unit-suffixed value to SI. All problems are
collected before anything is reported.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

from .core_model import DEFAULT_CONSTANTS, ParticleParams, RotationInit, validate_regime
from .errors import SimulationError
from .units import dimension_of, split_key, to_si

logger = logging.getLogger(__name__)

SCHEMES = ('gyroscopic_pm1', 'static_0m1')
TOP_LEVEL_KEYS = {'name', 'description', 'scheme'}


@dataclass
class ValidationResult:
    """Result of validating a scenario document."""
    is_valid: bool
    errors: list[str]
    warnings: list[str]

    def __post_init__(self):
        if self.errors is None:
            self.errors = []
        if self.warnings is None:
            self.warnings = []


# base name -> (dimension, required, list-valued)
PHYSICAL_KEYS = {
    'particle': {
        'mass': ('mass', True, False),
        'density': ('density', False, False),
        'inertia': ('inertia', False, False),
        'nv_offset_d': ('length', False, False),
        'nv_angle_alpha': ('angle', False, False),
    },
    'field': {
        'B0': ('field', True, False),
        'B1': ('field', True, False),
        'eta': ('field_gradient', True, False),
    },
    'protocol': {
        'tau1': ('time', True, False),
        'tau2': ('time', True, False),
        'tau3': ('time', True, False),
        'tau4': ('time', True, False),
    },
    'rotation': {
        'omega0': ('angular_frequency', True, False),
        'theta0': ('angle', True, False),
    },
    'quantum': {
        'dp_psi': ('action', False, False),
        'dp_phi': ('action', False, False),
        'temperature': ('temperature', False, False),
    },
    'integrator': {},
    'outputs': {},
    'regime': {},
    'analysis': {
        'peak_window': ('time', False, False),
        'spin_window': ('time', False, False),
        'offset_grid': ('length', False, True),
        'curve_omega0_grid': ('angular_frequency', False, True),
        'curve_dp_family': ('action', False, True),
    },
}

# keys without units: name -> accepted python types
PLAIN_KEYS = {
    'particle': {},
    'field': {},
    'protocol': {'mode': (str,), 'closure_unknowns': (list,)},
    'rotation': {},
    'quantum': {'occupation_n': (int, float)},
    'integrator': {
        'rtol': (float,), 'atol': (float,), 'steps_per_period': (int,),
        'linear_steps_per_period': (int,), 'closure_max_iter': (int,),
        'full_rotation': (bool,), 'field_sign_strict': (bool,),
    },
    'outputs': {
        'directory': (str,), 'stride': (int,), 'trajectory_csv': (bool,),
        'report_json': (bool,), 'peaks_csv': (bool,),
    },
    'regime': {
        'separation_factor': (int, float), 'off_resonance_factor': (int, float),
        'spin_transfer_threshold': (float,),
    },
    'analysis': {'spin_samples': (int,), 'curve_n_family': (list,)},
}

# SI values that must be strictly positive / non-negative
POSITIVE = {'mass', 'density', 'inertia', 'B0', 'B1', 'eta', 'tau1', 'tau2', 'tau3', 'tau4',
            'dp_psi', 'dp_phi', 'peak_window', 'spin_window'}
NON_NEGATIVE = {'nv_offset_d', 'omega0', 'theta0', 'temperature'}

PLAIN_RANGES = {
    'rtol': (1e-14, 1e-2),
    'atol': (1e-20, 1e-2),
    'steps_per_period': (4, 10000),
    'linear_steps_per_period': (4, 10000),
    'closure_max_iter': (1, 1000),
    'stride': (1, 10 ** 9),
    'separation_factor': (1, 1e6),
    'off_resonance_factor': (1, 1e12),
    'spin_transfer_threshold': (0, 1),
    'spin_samples': (2, 10 ** 7),
    'occupation_n': (0, 1e12),
}


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _check_plain(section: str, key: str, value, errors: list[str]):
    types = PLAIN_KEYS[section][key]
    # ints are acceptable wherever floats are
    accepted = types + ((int,) if float in types else ())
    if isinstance(value, bool) and bool not in types:
        errors.append(f"Wrong type: {section}.{key} must be {'/'.join(t.__name__ for t in types)}")
        return
    if not isinstance(value, accepted):
        errors.append(f"Wrong type: {section}.{key} must be {'/'.join(t.__name__ for t in types)}")
        return
    if key in PLAIN_RANGES and _is_number(value):
        low, high = PLAIN_RANGES[key]
        if not low <= value <= high:
            errors.append(f"Out of range: {section}.{key}={value} not in [{low:g}, {high:g}]")


def validate_section(section: str, body, normalized: dict, errors: list[str], warnings: list[str]):
    """Validate one section, filling ``normalized[section]`` with SI values."""
    if not isinstance(body, dict):
        errors.append(f"Section '{section}' must be an object")
        return
    values = {}
    physical = PHYSICAL_KEYS[section]
    plain = PLAIN_KEYS[section]
    for key, value in body.items():
        if key in plain:
            _check_plain(section, key, value, errors)
            values[key] = value
            continue
        parts = split_key(key)
        if parts is None:
            if key in physical:
                errors.append(f"Missing unit suffix: {section}.{key}")
            else:
                errors.append(f"Unknown key: {section}.{key}")
            continue
        base, suffix = parts
        if base not in physical:
            errors.append(f"Unknown key: {section}.{key}")
            continue
        dimension, _, listed = physical[base]
        if dimension_of(suffix) != dimension:
            errors.append(f"Wrong unit: {section}.{key} has {dimension_of(suffix)}, expected {dimension}")
            continue
        if base in values:
            errors.append(f"Duplicate quantity: {section}.{base} given more than once")
            continue
        if listed:
            if not isinstance(value, list) or not value or not all(_is_number(v) for v in value):
                errors.append(f"Wrong type: {section}.{key} must be a non-empty list of numbers")
                continue
            values[base] = [to_si(v, suffix) for v in value]
            continue
        if not _is_number(value):
            errors.append(f"Wrong type: {section}.{key} must be a finite number")
            continue
        si = to_si(value, suffix)
        if base in POSITIVE and si <= 0:
            errors.append(f"Out of range: {section}.{key} must be positive")
            continue
        if base in NON_NEGATIVE and si < 0:
            errors.append(f"Out of range: {section}.{key} must be non-negative")
            continue
        values[base] = si

    for base, (_, required, _) in physical.items():
        if required and base not in values:
            errors.append(f"Missing required field: {section}.{base}")
    normalized[section] = values


def _check_consistency(normalized: dict, scheme: Optional[str], errors: list[str], warnings: list[str]):
    protocol = normalized.get('protocol', {})
    taus = [protocol.get(name) for name in ('tau1', 'tau2', 'tau3', 'tau4')]
    if all(t is not None for t in taus) and not taus[0] < taus[1] < taus[2] < taus[3]:
        errors.append("Inconsistent protocol: stage times must increase tau1 < tau2 < tau3 < tau4")
    mode = protocol.get('mode', 'auto')
    if mode not in ('auto', 'fixed'):
        errors.append(f"Wrong value: protocol.mode must be 'auto' or 'fixed', got {mode!r}")
    unknowns = protocol.get('closure_unknowns')
    if unknowns is not None:
        allowed = {'tau1', 'tau2', 'tau3', 'tau4'}
        if len(unknowns) != 2 or len(set(unknowns)) != 2 or not set(unknowns) <= allowed:
            errors.append("Wrong value: protocol.closure_unknowns must name two distinct stage times")

    rotation = normalized.get('rotation', {})
    alpha = normalized.get('particle', {}).get('nv_angle_alpha')
    if alpha is not None and not 0 <= alpha <= math.pi:
        errors.append("Out of range: particle.nv_angle_alpha must lie in [0, pi]")
    theta0 = rotation.get('theta0')
    if theta0 is not None and theta0 > 0.1:
        warnings.append(f"rotation.theta0={theta0:.3g} rad is not small; linearized results lose accuracy")
    if scheme == 'gyroscopic_pm1' and rotation.get('omega0') == 0:
        errors.append("Refused: omega0 = 0 has no gyroscopic stabilization; use scheme 'static_0m1'")

    quantum = normalized.get('quantum', {})
    if 'temperature' in quantum and 'occupation_n' in quantum:
        errors.append("Conflict: give quantum.occupation_n or a temperature, not both")
    if 'temperature' in quantum and rotation.get('omega0') == 0:
        errors.append("Conflict: a temperature needs omega0 > 0 to define an occupation number")

    n_family = normalized.get('analysis', {}).get('curve_n_family')
    if n_family is not None and not all(_is_number(n) and n >= 0 for n in n_family):
        errors.append("Wrong type: analysis.curve_n_family must list non-negative numbers")


def _regime_warnings(normalized: dict, separation_factor: float, warnings: list[str]):
    """Rotation-rate window of the gyroscopic scheme, reported as warnings."""
    particle = normalized.get('particle', {})
    field = normalized.get('field', {})
    rotation = normalized.get('rotation', {})
    if 'mass' not in particle or 'B0' not in field or not rotation.get('omega0'):
        return
    factor = normalized.get('regime', {}).get('separation_factor', separation_factor)
    try:
        params = ParticleParams(mass=particle['mass'], density=particle.get('density', 3500.0),
                                inertia=particle.get('inertia'))
        report = validate_regime(DEFAULT_CONSTANTS, params, RotationInit(rotation['omega0'], 0.0),
                                 field['B0'], factor, field.get('B1'))
    except SimulationError as e:
        logger.debug(f"Regime check skipped: {e}")
        return
    warnings.extend(f"Regime: {message}" for message in report.warnings)


def validate_config(document, separation_factor: float = 10.0) -> tuple[ValidationResult, dict]:
    """Validate a scenario document.

    Args:
        document: Parsed JSON object
        separation_factor: Regime factor used when the document has no regime section

    Returns:
        Tuple of the ValidationResult and the SI-normalized sections
    """
    errors = []
    warnings = []
    normalized = {}
    if not isinstance(document, dict) or not document:
        errors.append("Empty document: expected a JSON object with scenario sections")
        return ValidationResult(is_valid=False, errors=errors, warnings=warnings), normalized

    scheme = document.get('scheme')
    if scheme is None:
        errors.append("Missing required field: scheme")
    elif scheme not in SCHEMES:
        errors.append(f"Wrong value: scheme must be one of {', '.join(SCHEMES)}, got {scheme!r}")

    for key in document:
        if key not in TOP_LEVEL_KEYS and key not in PHYSICAL_KEYS:
            errors.append(f"Unknown section: {key}")
    for section in ('particle', 'field', 'protocol', 'rotation'):
        if section not in document:
            errors.append(f"Missing required section: {section}")
    for section in PHYSICAL_KEYS:
        if section in document:
            validate_section(section, document[section], normalized, errors, warnings)

    _check_consistency(normalized, scheme, errors, warnings)
    if scheme == 'gyroscopic_pm1' and not errors:
        _regime_warnings(normalized, separation_factor, warnings)
    is_valid = len(errors) == 0
    for warning in warnings:
        logger.warning(f"Config: {warning}")
    return ValidationResult(is_valid=is_valid, errors=errors, warnings=warnings), normalized
