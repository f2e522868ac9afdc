"""Euler-angle (ZXZ) dynamics of the spinning nanodiamond.

Rotational Hamiltonian of a spherical top with the NV Zeeman term

    H = p_theta^2/2I + (p_phi - p_psi cos theta)^2 / (2 I sin^2 theta) + p_psi^2/2I
        + mu s B_nv(theta, psi) cos theta

Two solvers share the same field/spin schedule:

* ``integrate_full``: Hamilton's equations of H with an adaptive explicit
  Runge-Kutta (DOP853) on momenta scaled by I*omega0.
* ``integrate_linearized``: the small-tilt nutation equation
      theta'' = -(omega0^2 - mu s B_c/I)(theta - theta0) + (mu s/I) B_c theta0
  propagated exactly over short steps with the coefficients frozen at the
  step midpoint.

The field strength B_c is a magnitude and the spin s flips only at tau3.
With ``field_sign_strict`` the signed B_z of the stage is used instead, so
the Zeeman term reverses in stage 3.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .core_model import DEFAULT_CONSTANTS, ParticleParams, PhysicalConstants, RotationInit
from .errors import IntegrationError, ParameterError, RegimeError
from .field_protocol import FieldProtocol, b_com, b_nv, field_vector, gradient_sign
from .ode import integrate_piecewise
from .translational import BranchTrajectory, SpinBranch

logger = logging.getLogger(__name__)

# Euler chart degenerates at theta = 0, pi
SINGULARITY_BAND = 1e-3


@dataclass(frozen=True)
class RotationalState:
    theta: float
    phi: float
    psi: float
    p_theta: float
    p_phi: float
    p_psi: float
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi, self.psi, self.p_theta, self.p_phi, self.p_psi])


def gyroscope_initial(rotation: RotationInit, particle: ParticleParams) -> RotationalState:
    """Spinning at omega0 about n3 tilted by theta0, no nutation velocity."""
    L = particle.inertia * rotation.omega0
    return RotationalState(rotation.theta0, 0.0, 0.0, 0.0, L * math.cos(rotation.theta0), L)


@dataclass(frozen=True, eq=False)
class RotationalSeries:
    """Sampled rotational history of one arm."""
    t: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    theta_bar: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    p_theta: np.ndarray
    p_phi: Optional[np.ndarray] = None
    p_psi: Optional[np.ndarray] = None
    k: Optional[np.ndarray] = None
    valid: bool = True
    method: str = 'linearized'


@dataclass
class MismatchReport:
    """Arm mismatches at tau4.

    delta_phi/delta_psi come from the theta_bar area route (delta_psi = -delta_phi);
    the *_quadrature fields integrate the sampled theta directly.
    """
    delta_theta: float
    delta_p_theta: float
    delta_phi: float
    delta_psi: float
    delta_theta_bound: float
    sigma_A_minus_sigma_B: float
    delta_phi_quadrature: float = math.nan
    delta_psi_quadrature: float = math.nan
    delta_theta_full: Optional[float] = None
    delta_phi_full: Optional[float] = None
    delta_psi_full: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class PhiArea:
    delta_phi: float
    sigma_A: float
    sigma_B: float


def rotational_hamiltonian(state, B_c, eta_tilde, s, particle: ParticleParams,
                           constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Value of the rotational Hamiltonian at ``state`` = (theta, phi, psi, p_theta, p_phi, p_psi)."""
    theta, _, psi, p_theta, p_phi, p_psi = np.asarray(state, dtype=float)
    I = particle.inertia
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    a = p_phi - p_psi * cos_t
    kinetic = p_theta ** 2 / (2 * I) + a * a / (2 * I * sin_t * sin_t) + p_psi ** 2 / (2 * I)
    field_nv = b_nv(B_c, eta_tilde, theta, psi, particle.nv_offset_d, particle.nv_angle_alpha)
    return kinetic + constants.mu_nv * s * field_nv * cos_t


def hamilton_rhs(state, B_c, eta_tilde, s, particle: ParticleParams,
                 constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Hamilton's equations of the rotational Hamiltonian."""
    theta, _, psi, p_theta, p_phi, p_psi = np.asarray(state, dtype=float)
    if not SINGULARITY_BAND < theta < math.pi - SINGULARITY_BAND:
        raise IntegrationError(f"theta={theta:.3g} entered the Euler-angle singularity band")
    I = particle.inertia
    mu = constants.mu_nv
    d, alpha = particle.nv_offset_d, particle.nv_angle_alpha
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    sin_p, cos_p = math.sin(psi), math.cos(psi)
    a = p_phi - p_psi * cos_t

    theta_dot = p_theta / I
    phi_dot = a / (I * sin_t * sin_t)
    psi_dot = p_psi / I - cos_t * phi_dot

    field_nv = B_c + eta_tilde * d * (math.cos(alpha) * cos_t + sin_t * math.sin(alpha) * cos_p)
    dfield_dtheta = eta_tilde * d * (-math.cos(alpha) * sin_t + cos_t * math.sin(alpha) * cos_p)
    dfield_dpsi = -eta_tilde * d * sin_t * math.sin(alpha) * sin_p

    p_theta_dot = (a * (p_phi * cos_t - p_psi) / (I * sin_t ** 3)
                   - mu * s * (dfield_dtheta * cos_t - field_nv * sin_t))
    p_psi_dot = -mu * s * dfield_dpsi * cos_t
    return np.array([theta_dot, phi_dot, psi_dot, p_theta_dot, 0.0, p_psi_dot])


def theta_bar(B_c, s, particle: ParticleParams, omega0: float, theta0: float,
              variant: str = 'exact', constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Adiabatic nutation equilibrium theta0 + mu s B_c theta0 / (I omega0^2 - mu s B_c)."""
    zeeman = constants.mu_nv * np.asarray(s) * np.asarray(B_c)
    gyro = particle.inertia * omega0 ** 2
    if variant == 'approximate':
        denominator = np.full_like(zeeman, gyro, dtype=float)
    elif variant == 'exact':
        denominator = gyro - zeeman
    else:
        raise ParameterError(f"unknown theta_bar variant {variant!r}")
    if np.any(denominator <= 0):
        raise RegimeError("I omega0^2 <= mu s B_c: the nutation mode is unstable")
    value = theta0 + zeeman * theta0 / denominator
    return float(value) if np.ndim(value) == 0 else value


def delta_theta_bound(B0: float, theta0: float, particle: ParticleParams, omega0: float,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Worst-case final tilt mismatch 8 mu B0 theta0 / (I omega0^2)."""
    if omega0 <= 0:
        raise RegimeError("the tilt-mismatch bound needs omega0 > 0")
    return 8.0 * constants.mu_nv * B0 * theta0 / (particle.inertia * omega0 ** 2)


def nutation_amplitude(theta, theta_dot, theta_bar_values, k):
    """Oscillation amplitude sqrt((theta - theta_bar)^2 + (theta_dot/k)^2)."""
    return np.sqrt((np.asarray(theta) - theta_bar_values) ** 2 + (np.asarray(theta_dot) / k) ** 2)


def spin_flip_kick_window(amplitude: float, delta_theta_bar: float) -> tuple[float, float]:
    """Range of the nutation amplitude right after the equilibrium jumps by delta_theta_bar."""
    return abs(amplitude - abs(delta_theta_bar)), amplitude + abs(delta_theta_bar)


def build_time_grid(protocol: FieldProtocol, t_end: float, dt_max: float) -> np.ndarray:
    """Uniform grid inside each stage, hitting every breakpoint exactly."""
    if dt_max <= 0:
        raise ParameterError("dt_max must be positive")
    edges = [0.0] + protocol.breakpoints(t_end) + [t_end]
    pieces = []
    for start, stop in zip(edges[:-1], edges[1:]):
        n = max(1, int(math.ceil((stop - start) / dt_max)))
        pieces.append(np.linspace(start, stop, n + 1)[:-1])
    pieces.append(np.array([t_end]))
    return np.concatenate(pieces)


def _field_schedule(protocol: FieldProtocol, branch: SpinBranch, z_of_t: Callable,
                    field_sign_strict: bool):
    """Vectorized (B, eta~, s) as seen by the Zeeman term at times t."""

    def schedule(t):
        t = np.asarray(t, dtype=float)
        z = z_of_t(t)
        if field_sign_strict:
            field_value, _ = field_vector(protocol, t, z, 0.0)
        else:
            field_value = b_com(protocol, t, z)
        return field_value, gradient_sign(protocol, t), branch.spin_at(t, protocol.tau3)

    return schedule


def integrate_full(initial: RotationalState, protocol: FieldProtocol, particle: ParticleParams,
                   branch: SpinBranch, z_of_t: Callable, t_grid: np.ndarray, omega0: float,
                   rtol: float = 1e-9, atol: float = 1e-12, steps_per_period: int = 50,
                   field_sign_strict: bool = False,
                   constants: PhysicalConstants = DEFAULT_CONSTANTS) -> RotationalSeries:
    """Integrate the full rotational Hamiltonian along one arm.

    Momenta are scaled by I*omega0 so the tolerances act on O(1) numbers.
    The spin flips at tau3; stage boundaries restart the integrator.
    """
    if omega0 <= 0:
        raise ParameterError("full integration needs omega0 > 0; use the libration solver for omega0 = 0")
    if not SINGULARITY_BAND < initial.theta < math.pi - SINGULARITY_BAND:
        raise IntegrationError(
            f"initial theta={initial.theta:.3g} lies in the singularity band; use integrate_linearized"
        )
    I = particle.inertia
    scale = I * omega0
    schedule = _field_schedule(protocol, branch, z_of_t, field_sign_strict)
    y0 = initial.as_array()
    y0[3:] /= scale

    def rhs(t, y):
        field_value, eta_tilde, s = schedule(t)
        state = np.concatenate([y[:3], y[3:] * scale])
        dy = hamilton_rhs(state, float(field_value), float(eta_tilde), int(s), particle, constants)
        dy[3:] /= scale
        return dy

    def near_pole(t, y):
        return min(y[0] - SINGULARITY_BAND, math.pi - SINGULARITY_BAND - y[0])

    near_pole.terminal = True

    max_step = (2 * math.pi / omega0) / steps_per_period
    logger.info(f"Full rotational integration of arm {branch.label} over {t_grid[-1]:.4g} s "
                f"(max step {max_step:.3g} s)")
    Y, _ = integrate_piecewise(
        rhs, y0, t_grid, breakpoints=protocol.breakpoints(t_grid[-1]),
        method='DOP853', rtol=rtol, atol=atol, max_step=max_step, events=near_pole,
    )
    field_value, _, s = schedule(t_grid)
    bar = theta_bar(field_value, s, particle, omega0, initial.theta, constants=constants)
    return RotationalSeries(
        t=t_grid, theta=Y[:, 0], theta_dot=Y[:, 3] * scale / I, theta_bar=bar,
        phi=Y[:, 1], psi=Y[:, 2], p_theta=Y[:, 3] * scale, p_phi=Y[:, 4] * scale,
        p_psi=Y[:, 5] * scale, method='full',
    )


def integrate_linearized(rotation: RotationInit, protocol: FieldProtocol, particle: ParticleParams,
                         branch: SpinBranch, z_of_t: Callable, t_grid: np.ndarray,
                         field_sign_strict: bool = False,
                         constants: PhysicalConstants = DEFAULT_CONSTANTS) -> RotationalSeries:
    """Small-tilt nutation about theta0 on ``t_grid``.

    Each step is the exact harmonic solution with the field frozen at the
    step midpoint; the grid must resolve the nutation period (about 16
    points per 2 pi/omega0 is plenty). phi is accumulated from the exact
    per-step integral of (omega0/theta0)(theta - theta0).
    """
    omega0, theta0 = rotation.omega0, rotation.theta0
    if omega0 <= 0:
        raise ParameterError("nutation dynamics need omega0 > 0")
    t = np.asarray(t_grid, dtype=float)
    I = particle.inertia
    mu = constants.mu_nv
    schedule = _field_schedule(protocol, branch, z_of_t, field_sign_strict)

    h = np.diff(t)
    mid = t[:-1] + 0.5 * h
    field_mid, _, s_mid = schedule(mid)
    k2 = omega0 ** 2 - mu * s_mid * field_mid / I
    if np.any(k2 <= 0):
        raise RegimeError("omega0^2 <= mu s B_c / I somewhere on the trajectory")
    k = np.sqrt(k2)
    bar_mid = theta0 + mu * s_mid * field_mid * theta0 / (I * k2)
    cos_kh = np.cos(k * h)
    sin_kh = np.sin(k * h)

    n = t.size
    theta = np.empty(n)
    theta_dot = np.empty(n)
    area = np.zeros(n)
    theta[0], theta_dot[0] = theta0, 0.0
    th, v, acc = theta0, 0.0, 0.0
    for i in range(n - 1):
        u = th - bar_mid[i]
        ki = k[i]
        acc += (bar_mid[i] - theta0) * h[i] + u * sin_kh[i] / ki + v * (1.0 - cos_kh[i]) / (ki * ki)
        th = bar_mid[i] + u * cos_kh[i] + v * sin_kh[i] / ki
        v = -u * ki * sin_kh[i] + v * cos_kh[i]
        theta[i + 1], theta_dot[i + 1], area[i + 1] = th, v, acc

    field_t, _, s_t = schedule(t)
    bar = theta_bar(field_t, s_t, particle, omega0, theta0, constants=constants)
    k_t = np.sqrt(omega0 ** 2 - mu * s_t * field_t / I)

    excursion = float(np.max(np.abs(theta - theta0)))
    valid = theta0 == 0 or excursion <= 0.1 * theta0
    if not valid:
        logger.warning(f"Linearized nutation of arm {branch.label}: max|theta - theta0|={excursion:.3g} "
                       f"is not small against theta0={theta0:.3g}")

    if theta0 > 0:
        phi = (omega0 / theta0) * area
    else:
        phi = np.zeros(n)
    return RotationalSeries(
        t=t, theta=theta, theta_dot=theta_dot, theta_bar=bar, phi=phi, psi=-phi,
        p_theta=I * theta_dot, k=k_t, valid=valid, method='linearized',
    )


def accumulate_phi_psi(t, theta, omega0: float, theta0: float, variant: str = 'approximate',
                       p_phi=None, p_psi=None, inertia: Optional[float] = None):
    """Precession and spin angles from a sampled theta history.

    The approximate variant integrates phi' = (omega0/theta0)(theta - theta0)
    and psi' = -phi'. The exact variant uses the full Euler-angle rates and
    needs p_phi, p_psi and the inertia; its psi includes the omega0 t spin.
    """
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if variant == 'approximate':
        if theta0 == 0:
            zeros = np.zeros_like(t)
            return zeros, zeros.copy()
        phi = cumulative_trapezoid((omega0 / theta0) * (theta - theta0), t, initial=0.0)
        return phi, -phi
    if variant == 'exact':
        if p_phi is None or p_psi is None or inertia is None:
            raise ParameterError("the exact variant needs p_phi, p_psi and inertia")
        sin_t, cos_t = np.sin(theta), np.cos(theta)
        phi_dot = (p_phi - p_psi * cos_t) / (inertia * sin_t ** 2)
        psi_dot = p_psi / inertia - cos_t * phi_dot
        return (cumulative_trapezoid(phi_dot, t, initial=0.0),
                cumulative_trapezoid(psi_dot, t, initial=0.0))
    raise ParameterError(f"unknown variant {variant!r}")


def delta_phi_area(theta_bar_L, theta_bar_R, t, omega0: float, theta0: float) -> PhiArea:
    """delta_phi(tau4) ~ (omega0/theta0)(Sigma_A - Sigma_B) from the equilibrium histories."""
    theta_bar_L = np.asarray(theta_bar_L, dtype=float)
    theta_bar_R = np.asarray(theta_bar_R, dtype=float)
    t = np.asarray(t, dtype=float)
    if theta_bar_L.shape != theta_bar_R.shape or theta_bar_L.shape != t.shape:
        raise ParameterError("theta_bar series must share one time grid")
    diff = theta_bar_L - theta_bar_R
    sigma_A = float(trapezoid(np.clip(diff, 0.0, None), t))
    sigma_B = float(trapezoid(np.clip(-diff, 0.0, None), t))
    if theta0 == 0:
        return PhiArea(0.0, sigma_A, sigma_B)
    return PhiArea((omega0 / theta0) * (sigma_A - sigma_B), sigma_A, sigma_B)


def mismatch_report(left: RotationalSeries, right: RotationalSeries, rotation: RotationInit,
                    particle: ParticleParams, B0: float, full_left: Optional[RotationalSeries] = None,
                    full_right: Optional[RotationalSeries] = None,
                    constants: PhysicalConstants = DEFAULT_CONSTANTS) -> MismatchReport:
    """Combine two arms' rotational histories into the tau4 mismatches."""
    omega0, theta0 = rotation.omega0, rotation.theta0
    area = delta_phi_area(left.theta_bar, right.theta_bar, left.t, omega0, theta0)
    phi_L, psi_L = accumulate_phi_psi(left.t, left.theta, omega0, theta0)
    phi_R, psi_R = accumulate_phi_psi(right.t, right.theta, omega0, theta0)
    report = MismatchReport(
        delta_theta=float(left.theta[-1] - right.theta[-1]),
        delta_p_theta=float(left.p_theta[-1] - right.p_theta[-1]),
        delta_phi=area.delta_phi,
        delta_psi=-area.delta_phi,
        delta_theta_bound=delta_theta_bound(B0, theta0, particle, omega0, constants),
        sigma_A_minus_sigma_B=area.sigma_A - area.sigma_B,
        delta_phi_quadrature=float(phi_L[-1] - phi_R[-1]),
        delta_psi_quadrature=float(psi_L[-1] - psi_R[-1]),
    )
    if full_left is not None and full_right is not None:
        report.delta_theta_full = float(full_left.theta[-1] - full_right.theta[-1])
        report.delta_phi_full = float(full_left.phi[-1] - full_right.phi[-1])
        report.delta_psi_full = float(full_left.psi[-1] - full_right.psi[-1])
    if abs(report.delta_theta) > report.delta_theta_bound:
        logger.warning(f"|delta_theta|={abs(report.delta_theta):.3g} exceeds the bound "
                       f"{report.delta_theta_bound:.3g}")
    logger.info(f"Mismatch: delta_theta={report.delta_theta:.3g} rad, delta_phi={report.delta_phi:.4g} rad "
                f"(quadrature {report.delta_phi_quadrature:.4g})")
    return report


def attach_rotation(trajectory: BranchTrajectory, series: RotationalSeries) -> BranchTrajectory:
    """Copy a rotational history into a translational trajectory sampled on the same grid."""
    if series.t.shape != trajectory.t.shape or not np.allclose(series.t, trajectory.t, rtol=0, atol=1e-15):
        raise ParameterError("rotational and translational samples are on different grids")
    return trajectory.with_rotation(
        theta=series.theta, p_theta=series.p_theta, phi=series.phi, psi=series.psi,
        extras={'theta_bar': series.theta_bar, 'theta_dot': series.theta_dot},
    )
