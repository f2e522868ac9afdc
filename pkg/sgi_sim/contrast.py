"""Spin contrast of the gyroscopic scheme.

The nutation mode is a harmonic oscillator of frequency ~omega0 in
phase-space units X = sqrt(I omega0 / 2 hbar) theta. Each arm ends in a
coherent state alpha displaced from its own equilibrium theta_bar, so the
rotational overlap is exp(-|alpha_L - (alpha_R + dX)|^2 / 2). The phi and
psi packets contribute the Gaussian factors exp(-dphi^2 dp_phi^2 / 2 hbar^2).

Lower bound on the contrast:

    C >= exp(-dphi^2 dp_phi^2/2hbar^2 - dpsi^2 dp_psi^2/2hbar^2
             - 16 (1 + 2n) mu^2 B0^2 theta0^2 / (hbar I omega0^3))
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import quad

from .core_model import DEFAULT_CONSTANTS, ParticleParams, PhysicalConstants, occupation_to_temperature
from .errors import ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoherentAmplitude:
    alpha: complex
    equilibrium_theta_bar: float


def _phase_space_scale(particle: ParticleParams, omega0: float, constants: PhysicalConstants) -> float:
    if omega0 <= 0:
        raise ParameterError("the nutation oscillator needs omega0 > 0")
    return math.sqrt(particle.inertia * omega0 / (2.0 * constants.hbar))


def coherent_amplitude(theta: float, theta_dot: float, theta_bar: float, particle: ParticleParams,
                       omega0: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> CoherentAmplitude:
    """alpha = sqrt(I omega0/2 hbar) [(theta - theta_bar) + i theta_dot/omega0]."""
    scale = _phase_space_scale(particle, omega0, constants)
    alpha = scale * complex(theta - theta_bar, theta_dot / omega0)
    return CoherentAmplitude(alpha, float(theta_bar))


def amplitude_bound(B0: float, theta0: float, particle: ParticleParams, omega0: float,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Largest final |alpha|: sqrt(I omega0/2 hbar) 3 mu B0 theta0 / (I omega0^2)."""
    scale = _phase_space_scale(particle, omega0, constants)
    return scale * 3.0 * constants.mu_nv * B0 * theta0 / (particle.inertia * omega0 ** 2)


def coherent_overlap(alpha_L: complex, alpha_R: complex, delta_X: float) -> float:
    return math.exp(-0.5 * abs(alpha_L - (alpha_R + delta_X)) ** 2)


def delta_x(B_c_tau4: float, theta0: float, particle: ParticleParams, omega0: float,
            constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Equilibrium displacement sqrt(I omega0/2 hbar) 2 mu B_c(tau4) theta0 / (I omega0^2)."""
    scale = _phase_space_scale(particle, omega0, constants)
    return scale * 2.0 * constants.mu_nv * B_c_tau4 * theta0 / (particle.inertia * omega0 ** 2)


def third_term(B0: float, theta0: float, particle: ParticleParams, omega0: float, occupation_n: float = 0.0,
               constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """16 (1 + 2n) mu^2 B0^2 theta0^2 / (hbar I omega0^3)."""
    if omega0 <= 0:
        raise ParameterError("the contrast bound needs omega0 > 0")
    if occupation_n < 0:
        raise ParameterError(f"occupation number must be non-negative, got {occupation_n}")
    mu_b = constants.mu_nv * B0
    return 16.0 * (1.0 + 2.0 * occupation_n) * mu_b ** 2 * theta0 ** 2 / (
        constants.hbar * particle.inertia * omega0 ** 3)


def _packet_exponent(delta_phi, delta_psi, dp_phi, dp_psi, hbar):
    return 0.5 * (delta_phi * dp_phi / hbar) ** 2 + 0.5 * (delta_psi * dp_psi / hbar) ** 2


def gaussian_characteristic(delta: float, dp: float, hbar: float = DEFAULT_CONSTANTS.hbar) -> float:
    """Quadrature of the momentum integral of a Gaussian packet of width dp against exp(i p delta/hbar)."""
    kappa = delta * dp / hbar

    def integrand(u):
        return math.exp(-0.5 * u * u) * math.cos(kappa * u) / math.sqrt(2.0 * math.pi)

    value, _ = quad(integrand, -40.0, 40.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    return abs(value)


def full_integral_contrast(delta_phi: float, delta_psi: float, dp_phi: float, dp_psi: float,
                           overlap: float = 1.0, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Contrast from numerical momentum integrals over both packets times the nutation overlap."""
    hbar = constants.hbar
    return (gaussian_characteristic(delta_phi, dp_phi, hbar)
            * gaussian_characteristic(delta_psi, dp_psi, hbar) * overlap)


@dataclass(frozen=True)
class ContrastInputs:
    """Mismatches and packet widths entering the contrast.

    The optional coherent amplitudes and measured displacement give the
    measured (not worst-case) contrast.
    """
    delta_phi: float
    delta_psi: float
    dp_phi: float
    dp_psi: float
    B0: float
    theta0: float
    omega0: float
    particle: ParticleParams
    occupation_n: float = 0.0
    alpha_L: Optional[complex] = None
    alpha_R: Optional[complex] = None
    delta_X_measured: Optional[float] = None
    B_c_tau4: Optional[float] = None


@dataclass
class ContrastReport:
    delta_phi: float
    delta_psi: float
    dp_phi: float
    dp_psi: float
    third_term_exponent: float
    contrast_zero_T: float
    contrast_thermal: float
    occupation_n: float
    temperature_K: float
    contrast_full_integral: float
    delta_X: Optional[float] = None
    contrast_measured: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            'delta_phi_rad': self.delta_phi,
            'delta_psi_rad': self.delta_psi,
            'dp_phi_j_s': self.dp_phi,
            'dp_psi_j_s': self.dp_psi,
            'third_term_exponent': self.third_term_exponent,
            'contrast_zero_T': self.contrast_zero_T,
            'contrast_thermal': self.contrast_thermal,
            'occupation_n': self.occupation_n,
            'temperature_K': self.temperature_K,
            'temperature_convention': 'k_B T = n hbar omega0',
            'contrast_full_integral': self.contrast_full_integral,
            'delta_X': self.delta_X,
            'contrast_measured': self.contrast_measured,
        }


def _bound(inputs: ContrastInputs, n: float, constants: PhysicalConstants) -> tuple[float, float]:
    third = third_term(inputs.B0, inputs.theta0, inputs.particle, inputs.omega0, n, constants)
    packets = _packet_exponent(inputs.delta_phi, inputs.delta_psi, inputs.dp_phi, inputs.dp_psi, constants.hbar)
    return math.exp(-(packets + third)), third


def thermal_contrast_bound(inputs: ContrastInputs, n: float,
                           constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Contrast bound with the nutation term weighted by (1 + 2n)."""
    value, _ = _bound(inputs, n, constants)
    return value


def gyro_contrast_bound(inputs: ContrastInputs, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> ContrastReport:
    """Zero-temperature and thermal bounds, the momentum-integral form and the measured contrast."""
    zero_T, third = _bound(inputs, 0.0, constants)
    thermal = thermal_contrast_bound(inputs, inputs.occupation_n, constants)

    # worst-case overlap exp(-(8A)^2/2) equals exp(-third)
    full = full_integral_contrast(inputs.delta_phi, inputs.delta_psi, inputs.dp_phi, inputs.dp_psi,
                                  math.exp(-third), constants)

    dX = None
    measured = None
    if inputs.B_c_tau4 is not None:
        dX = delta_x(inputs.B_c_tau4, inputs.theta0, inputs.particle, inputs.omega0, constants)
    if inputs.alpha_L is not None and inputs.alpha_R is not None:
        shift = inputs.delta_X_measured if inputs.delta_X_measured is not None else (dX or 0.0)
        overlap = coherent_overlap(inputs.alpha_L, inputs.alpha_R, shift)
        packets = _packet_exponent(inputs.delta_phi, inputs.delta_psi, inputs.dp_phi, inputs.dp_psi,
                                   constants.hbar)
        measured = math.exp(-packets) * overlap

    temperature = occupation_to_temperature(inputs.occupation_n, inputs.omega0, constants)
    report = ContrastReport(
        delta_phi=inputs.delta_phi,
        delta_psi=inputs.delta_psi,
        dp_phi=inputs.dp_phi,
        dp_psi=inputs.dp_psi,
        third_term_exponent=third,
        contrast_zero_T=zero_T,
        contrast_thermal=thermal,
        occupation_n=inputs.occupation_n,
        temperature_K=temperature,
        contrast_full_integral=full,
        delta_X=dX,
        contrast_measured=measured,
    )
    measured_text = "n/a" if measured is None else f"{measured:.4f}"
    logger.info(f"Contrast bound {zero_T:.4f} (n={inputs.occupation_n:g}: {thermal:.4f}, "
                f"T={temperature * 1e3:.3g} mK), measured {measured_text}")
    return report


def contrast_vs_omega0_curve(B0: float, theta0: float, particle: ParticleParams, omega_grid: Sequence[float],
                             dp_family: Sequence[float], n_family: Sequence[float],
                             delta_phi: Optional[Callable[[float], float]] = None,
                             anchor: Optional[tuple[float, float]] = None,
                             constants: PhysicalConstants = DEFAULT_CONSTANTS) -> pd.DataFrame:
    """Contrast bound against omega0 for families of packet widths (units of hbar) and occupations.

    delta_phi(omega0) is either supplied per point or scaled as 1/omega0
    from ``anchor`` = (omega_ref, delta_phi_ref). dp_phi = dp_psi cos(theta0).
    """
    if delta_phi is None:
        if anchor is None:
            raise ParameterError("supply delta_phi(omega0) or an (omega_ref, delta_phi_ref) anchor")
        omega_ref, phi_ref = anchor

        def delta_phi(omega0):
            return phi_ref * omega_ref / omega0

    omegas = np.asarray(omega_grid, dtype=float)
    if omegas.size == 0 or np.any(np.diff(omegas) <= 0):
        raise ParameterError("omega0 grid must be non-empty and increasing")
    rows = []
    for dp_units in dp_family:
        dp_psi = dp_units * constants.hbar
        dp_phi = dp_psi * math.cos(theta0)
        for n in n_family:
            for omega0 in omegas:
                phi = float(delta_phi(float(omega0)))
                inputs = ContrastInputs(phi, -phi, dp_phi, dp_psi, B0, theta0, float(omega0), particle, n)
                value, third = _bound(inputs, n, constants)
                rows.append((float(omega0), float(omega0) / (2 * math.pi), dp_units, n, phi, third, value))
    return pd.DataFrame(rows, columns=['omega0_rad_s', 'omega0_hz', 'dp_hbar', 'occupation_n',
                                       'delta_phi_rad', 'third_term', 'contrast'])
