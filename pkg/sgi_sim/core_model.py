"""Physical constants, particle and initial-condition records, regime checks.

All records are frozen dataclasses in SI units. Angular frequencies are
stored in rad/s; conversions from Gauss, µm, Hz happen in the config layer.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ParameterError

logger = logging.getLogger(__name__)

_H = 6.62607015e-34


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA constants plus the diamond / NV material constants."""
    hbar: float = _H / (2.0 * math.pi)
    h: float = _H
    mu0: float = 1.25663706212e-6
    kB: float = 1.380649e-23
    # mass magnetic susceptibility of diamond, m^3/kg
    chi_rho: float = -6.2e-9
    # NV magnetic moment, h x 2.8 MHz/G
    mu_nv: float = _H * 2.8e10
    # zero-field splitting, h x 2.87 GHz
    D_zfs: float = _H * 2.87e9

    def __post_init__(self):
        values = {
            'hbar': self.hbar, 'h': self.h, 'mu0': self.mu0, 'kB': self.kB,
            'chi_rho': self.chi_rho, 'mu_nv': self.mu_nv, 'D_zfs': self.D_zfs,
        }
        for name, value in values.items():
            if not math.isfinite(value):
                raise ParameterError(f"Constant {name} must be finite, got {value}")
        if self.chi_rho >= 0:
            raise ParameterError(f"chi_rho must be negative (diamagnetic), got {self.chi_rho}")
        if self.mu_nv <= 0:
            raise ParameterError(f"mu_nv must be positive, got {self.mu_nv}")
        if self.D_zfs <= 0:
            raise ParameterError(f"D_zfs must be positive, got {self.D_zfs}")


DEFAULT_CONSTANTS = PhysicalConstants()


def radius(mass: float, density: float) -> float:
    """Radius of a homogeneous sphere of the given mass and density."""
    if mass <= 0 or density <= 0:
        raise ParameterError(f"mass and density must be positive, got mass={mass}, density={density}")
    return (3.0 * mass / (4.0 * math.pi * density)) ** (1.0 / 3.0)


def derive_inertia(mass: float, density: float) -> float:
    """Moment of inertia (2/5) m r^2 of a homogeneous sphere."""
    r = radius(mass, density)
    return 0.4 * mass * r * r


@dataclass(frozen=True)
class ParticleParams:
    """Nanodiamond mass, inertia and NV offset geometry.

    If ``inertia`` is omitted it is derived from mass and density under
    the sphere assumption.
    """
    mass: float
    density: float = 3500.0
    inertia: Optional[float] = None
    nv_offset_d: float = 0.0
    nv_angle_alpha: float = 0.0

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ParameterError(f"mass must be positive, got {self.mass}")
        if self.inertia is None:
            object.__setattr__(self, 'inertia', derive_inertia(self.mass, self.density))
        if not (self.inertia > 0 and math.isfinite(self.inertia)):
            raise ParameterError(f"inertia must be positive, got {self.inertia}")
        if self.nv_offset_d < 0:
            raise ParameterError(f"nv_offset_d must be non-negative, got {self.nv_offset_d}")
        if not 0.0 <= self.nv_angle_alpha <= math.pi:
            raise ParameterError(f"nv_angle_alpha must lie in [0, pi], got {self.nv_angle_alpha}")

    @property
    def radius(self) -> float:
        return radius(self.mass, self.density)


@dataclass(frozen=True)
class RotationInit:
    """Initial spin rate about n3 and tilt of n3 from z."""
    omega0: float
    theta0: float

    def __post_init__(self):
        if self.omega0 < 0:
            raise ParameterError(f"omega0 must be non-negative, got {self.omega0}")
        if self.theta0 < 0:
            raise ParameterError(f"theta0 must be non-negative, got {self.theta0}")
        if self.theta0 > 0.1:
            logger.warning(f"theta0={self.theta0:.3g} rad is not small; linearized results lose accuracy")


@dataclass(frozen=True)
class QuantumInit:
    """Momentum widths of the phi/psi packets and thermal occupation of the nutation mode.

    ``dp_phi`` defaults to ``dp_psi * cos(theta0)``.
    """
    dp_psi: float
    theta0: float = 0.0
    dp_phi: Optional[float] = None
    occupation_n: float = 0.0

    def __post_init__(self):
        if self.dp_psi <= 0:
            raise ParameterError(f"dp_psi must be positive, got {self.dp_psi}")
        if self.occupation_n < 0:
            raise ParameterError(f"occupation_n must be non-negative, got {self.occupation_n}")
        if self.dp_phi is None:
            object.__setattr__(self, 'dp_phi', self.dp_psi * math.cos(self.theta0))
        elif self.dp_phi <= 0:
            raise ParameterError(f"dp_phi must be positive, got {self.dp_phi}")


def occupation_to_temperature(n: float, omega0: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """k_B T = n hbar omega0."""
    return n * constants.hbar * omega0 / constants.kB


def temperature_to_occupation(temperature: float, omega0: float,
                              constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    if omega0 <= 0:
        raise ParameterError("omega0 must be positive to define an occupation number")
    return constants.kB * temperature / (constants.hbar * omega0)


def larmor_band(constants: PhysicalConstants, B1: float, B0: float) -> tuple[float, float]:
    """Larmor frequencies mu B / h in Hz at the weakest and strongest field."""
    return constants.mu_nv * B1 / constants.h, constants.mu_nv * B0 / constants.h


@dataclass
class RegimeReport:
    """Margins of the rotation-rate window omega_low*R <= omega0 <= omega_larmor/R."""
    omega0: float
    omega_low: float
    omega_larmor: float
    omega_zfs_plus: float
    omega_zfs_minus: float
    separation_factor: float
    lower_margin: float
    larmor_margin: float
    zfs_margin: float
    larmor_band_hz: tuple[float, float]
    flags: dict[str, bool] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        return {
            'omega0_rad_s': self.omega0,
            'omega_low_rad_s': self.omega_low,
            'omega_larmor_rad_s': self.omega_larmor,
            'omega_zfs_plus_rad_s': self.omega_zfs_plus,
            'omega_zfs_minus_rad_s': self.omega_zfs_minus,
            'separation_factor': self.separation_factor,
            'lower_margin': self.lower_margin,
            'larmor_margin': self.larmor_margin,
            'zfs_margin': self.zfs_margin,
            'larmor_band_hz': list(self.larmor_band_hz),
            'flags': dict(self.flags),
            'passed': self.passed,
            'warnings': list(self.warnings),
        }


def validate_regime(constants: PhysicalConstants, particle: ParticleParams, rotation: RotationInit,
                    B0: float, separation_factor: float = 10.0,
                    B1: Optional[float] = None) -> RegimeReport:
    """Check omega0 against the gyroscopic, Larmor and zero-field-splitting scales.

    Never raises; failures are reported as flags.
    """
    mu_b = constants.mu_nv * B0
    omega_low = math.sqrt(mu_b / particle.inertia)
    omega_larmor = mu_b / constants.hbar
    omega_zfs_plus = (constants.D_zfs + mu_b) / constants.hbar
    omega_zfs_minus = (constants.D_zfs - mu_b) / constants.hbar
    R = separation_factor
    w0 = rotation.omega0

    lower_margin = w0 / (R * omega_low)
    larmor_margin = omega_larmor / (R * w0) if w0 > 0 else math.inf
    zfs_margin = omega_zfs_minus / (R * w0) if w0 > 0 else math.inf

    flags = {
        'gyroscopic': lower_margin >= 1.0,
        'larmor': larmor_margin >= 1.0,
        'zero_field_splitting': zfs_margin >= 1.0,
    }
    warnings = []
    if not flags['gyroscopic']:
        warnings.append(f"omega0={w0:.4g} rad/s below {R:g} x sqrt(mu B0/I)={R * omega_low:.4g} rad/s")
    if not flags['larmor']:
        warnings.append(f"omega0={w0:.4g} rad/s not below mu B0/hbar / {R:g}={omega_larmor / R:.4g} rad/s")
    if not flags['zero_field_splitting']:
        warnings.append(f"omega0={w0:.4g} rad/s not below (D - mu B0)/hbar / {R:g}")
    if rotation.theta0 > 0.1:
        warnings.append(f"theta0={rotation.theta0:.3g} rad exceeds the small-tilt range")

    band = larmor_band(constants, B1 if B1 is not None else B0, B0)
    report = RegimeReport(
        omega0=w0,
        omega_low=omega_low,
        omega_larmor=omega_larmor,
        omega_zfs_plus=omega_zfs_plus,
        omega_zfs_minus=omega_zfs_minus,
        separation_factor=R,
        lower_margin=lower_margin,
        larmor_margin=larmor_margin,
        zfs_margin=zfs_margin,
        larmor_band_hz=band,
        flags=flags,
        warnings=warnings,
    )
    for message in warnings:
        logger.warning(f"Regime check: {message}")
    return report
