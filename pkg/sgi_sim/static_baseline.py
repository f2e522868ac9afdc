"""Non-rotating scheme with the spin pair {0, -1}.

Without spin the particle librates in the Zeeman potential of the s = -1
arm only: the L arm (-1 -> 0) is trapped until tau3 and free afterwards,
the R arm (0 -> -1) is free until tau3 and trapped afterwards. A NV offset
d sin(alpha) shifts the libration equilibrium and leaves a large tilt
mismatch at tau4, and the very different trapping histories of the two
arms spread the Gaussian packets differently.

Packet widths follow from the fundamental solutions a, b of
theta'' = -omega(t)^2 theta (a(0) = 1, b'(0) = 1):

    sigma^2 = X0 a^2 + 2 Y0 a b + Z0 b^2

which is the closed solution of sigma'' = -omega^2 sigma + hbar^2/(4 I^2 sigma^3).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from .core_model import DEFAULT_CONSTANTS, ParticleParams, PhysicalConstants
from .errors import ParameterError
from .field_protocol import FieldProtocol, b_com
from .ode import evaluate_pieces, integrate_piecewise
from .rotational import build_time_grid
from .translational import (BranchMotion, BranchTrajectory, SpinBranch, branch_pair,
                            close_interferometer, evolve_branch, max_separation)

logger = logging.getLogger(__name__)

WIDTH_GUARD = 1e-3


@dataclass(frozen=True)
class GaussianPacket:
    """Gaussian theta packet: width, width rate and phase curvature beta = I sigma_dot/(hbar sigma)."""
    sigma: float
    sigma_dot: float
    beta: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"packet width must be positive, got {self.sigma}")
        if not math.isfinite(self.beta):
            raise ParameterError("packet phase curvature must be finite")

    @classmethod
    def from_width(cls, sigma: float, sigma_dot: float, inertia: float,
                   constants: PhysicalConstants = DEFAULT_CONSTANTS) -> 'GaussianPacket':
        return cls(sigma, sigma_dot, inertia * sigma_dot / (constants.hbar * sigma))

    @classmethod
    def ground_state(cls, inertia: float, omega: float,
                     constants: PhysicalConstants = DEFAULT_CONSTANTS) -> 'GaussianPacket':
        """sigma0 = sqrt(hbar / (2 I omega))."""
        if omega <= 0:
            raise ParameterError("the ground-state width needs a positive libration frequency")
        return cls(math.sqrt(constants.hbar / (2.0 * inertia * omega)), 0.0, 0.0)


class WidthHistory:
    """Packet width of one arm, sampled and evaluable between samples."""

    def __init__(self, t, sigma, sigma_dot, evaluator: Callable, inertia: float, sigma0: float,
                 constants: PhysicalConstants = DEFAULT_CONSTANTS):
        self.t = t
        self.sigma = sigma
        self.sigma_dot = sigma_dot
        self._evaluator = evaluator
        self.inertia = inertia
        self.sigma0 = sigma0
        self.constants = constants

    def at(self, t):
        """(sigma, sigma_dot) at arbitrary times inside the evolved span."""
        return self._evaluator(t)

    def moments(self, t):
        """(X, Y) = (sigma^2, sigma sigma_dot)."""
        sigma, sigma_dot = self.at(t)
        return sigma * sigma, sigma * sigma_dot

    def packet_at(self, t: float) -> GaussianPacket:
        sigma, sigma_dot = self.at(t)
        return GaussianPacket.from_width(float(sigma), float(sigma_dot), self.inertia, self.constants)


def libration_eom(theta, s, B_c, eta_tilde, particle: ParticleParams, form: str = 'full',
                  constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Angular acceleration of the non-spinning particle.

    full:   (mu s/I)[B_nv sin(theta) + eta~ d sin(theta - alpha) cos(theta)], B_nv taken at psi = 0
    linear: (mu s/I)(B_c theta - eta~ d sin(alpha))

    At psi = 0 ``b_nv`` reduces to B_c + eta~ d cos(theta - alpha), so the
    offset enters as theta - alpha. A theta + alpha form is the same motion
    with alpha -> -alpha.
    """
    d, alpha = particle.nv_offset_d, particle.nv_angle_alpha
    coupling = constants.mu_nv * np.asarray(s) / particle.inertia
    theta = np.asarray(theta, dtype=float)
    if form == 'full':
        field_nv = B_c + eta_tilde * d * np.cos(theta - alpha)
        value = coupling * (field_nv * np.sin(theta) + eta_tilde * d * np.sin(theta - alpha) * np.cos(theta))
    elif form == 'linear':
        value = coupling * (B_c * theta - eta_tilde * d * math.sin(alpha))
    else:
        raise ParameterError(f"unknown libration form {form!r}")
    return float(value) if np.ndim(value) == 0 else value


def libration_equilibrium(B_c, eta_tilde, particle: ParticleParams):
    """Trapped-arm equilibrium eta~ d sin(alpha) / B_c."""
    return eta_tilde * particle.nv_offset_d * math.sin(particle.nv_angle_alpha) / np.asarray(B_c)


def libration_phase(theta: float, theta_dot: float, theta_eq: float, omega: float) -> float:
    """Oscillation phase gamma with theta - theta_eq = A cos(gamma), theta_dot = -A omega sin(gamma)."""
    if omega <= 0:
        raise ParameterError("libration phase needs a positive frequency")
    return math.atan2(-theta_dot / omega, theta - theta_eq)


def static_mismatch_estimates(protocol: FieldProtocol, particle: ParticleParams, gamma_theta: float,
                              constants: PhysicalConstants = DEFAULT_CONSTANTS) -> tuple[float, float]:
    """Envelope estimates (delta_theta, delta_p_theta) at tau4 for a flip at libration phase gamma_theta."""
    amplitude = protocol.eta * particle.nv_offset_d * math.sin(particle.nv_angle_alpha) / protocol.B1
    omega_high = math.sqrt(constants.mu_nv * protocol.B0 / particle.inertia)
    sin_gamma = math.sin(gamma_theta)
    delta_theta = amplitude * omega_high * (protocol.tau4 - protocol.tau3) * sin_gamma
    delta_p_theta = particle.inertia * amplitude * omega_high * sin_gamma
    return delta_theta, delta_p_theta


def coherence_lengths(sigma0: float, sigma_tau4: float,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> tuple[float, float]:
    """(lambda_theta, lambda_p) = (hbar/dp_theta, hbar/dtheta(tau4)) with dp_theta = hbar/(2 sigma0)."""
    if sigma0 <= 0 or sigma_tau4 <= 0:
        raise ParameterError("packet widths must be positive")
    return 2.0 * sigma0, constants.hbar / sigma_tau4


def semiclassical_contrast(delta_theta: float, delta_p_theta: float, lambda_theta: float,
                           lambda_p: float) -> float:
    if lambda_theta <= 0 or lambda_p <= 0:
        raise ParameterError("coherence lengths must be positive")
    return math.exp(-0.5 * ((delta_theta / lambda_theta) ** 2 + (delta_p_theta / lambda_p) ** 2))


def gaussian_contrast(sigma_L, sigma_dot_L, sigma_R, sigma_dot_R, particle: ParticleParams,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """|<Psi_L|Psi_R>| of two centred Gaussian packets (vectorized)."""
    sigma_L = np.asarray(sigma_L, dtype=float)
    sigma_R = np.asarray(sigma_R, dtype=float)
    if np.any(sigma_L <= 0) or np.any(sigma_R <= 0):
        raise ParameterError("packet widths must be positive")
    width_term = 1.0 + (sigma_L - sigma_R) ** 2 / (2.0 * sigma_L * sigma_R)
    phase_term = (particle.inertia / constants.hbar) * (np.asarray(sigma_dot_L) * sigma_R
                                                        - np.asarray(sigma_dot_R) * sigma_L)
    value = np.minimum((width_term ** 2 + phase_term ** 2) ** -0.25, 1.0)
    return float(value) if value.ndim == 0 else value


def _fundamental_step(k2, h):
    """Transfer entries (c, s, c', s') over h for y'' = -k2 y with frozen k2."""
    k2 = np.asarray(k2, dtype=float)
    h = np.asarray(h, dtype=float)
    k = np.sqrt(np.abs(k2))
    safe = np.where(k > 0, k, 1.0)
    trapped = k2 > 0
    anti = k2 < 0
    c = np.where(trapped, np.cos(k * h), np.where(anti, np.cosh(k * h), 1.0))
    s = np.where(trapped, np.sin(k * h) / safe, np.where(anti, np.sinh(k * h) / safe, h))
    c_dot = np.where(trapped, -k * np.sin(k * h), np.where(anti, k * np.sinh(k * h), 0.0))
    return c, s, c_dot, c


def packet_width_evolution(initial: GaussianPacket, omega_sq: Callable, t_grid, particle: ParticleParams,
                           method: str = 'fundamental', breakpoints=(), rtol: float = 1e-10,
                           atol: float = 1e-14,
                           constants: PhysicalConstants = DEFAULT_CONSTANTS) -> WidthHistory:
    """Evolve a Gaussian theta packet under theta'' = -omega_sq(t) theta.

    ``omega_sq`` is vectorized in t (mu s B_c / I for a trapped arm, 0 when
    free). The 'fundamental' method steps the two fundamental solutions with
    omega_sq frozen at each step midpoint, so ``t_grid`` must resolve the
    libration period. The 'ermakov' method integrates the width equation
    itself on the adaptive solver.
    """
    t = np.asarray(t_grid, dtype=float)
    I, hbar = particle.inertia, constants.hbar
    sigma0, sigma_dot0 = initial.sigma, initial.sigma_dot
    X0 = sigma0 ** 2
    Y0 = sigma0 * sigma_dot0
    Z0 = hbar ** 2 / (4.0 * I * I * sigma0 ** 2) + sigma_dot0 ** 2

    if method == 'fundamental':
        h = np.diff(t)
        k2 = omega_sq(t[:-1] + 0.5 * h)
        c, s, c_dot, s_dot = _fundamental_step(k2, h)
        fund = np.empty((t.size, 4))
        fund[0] = (1.0, 0.0, 0.0, 1.0)
        a, a_dot, b, b_dot = 1.0, 0.0, 0.0, 1.0
        for i in range(t.size - 1):
            a, a_dot = a * c[i] + a_dot * s[i], a * c_dot[i] + a_dot * s_dot[i]
            b, b_dot = b * c[i] + b_dot * s[i], b * c_dot[i] + b_dot * s_dot[i]
            fund[i + 1] = (a, a_dot, b, b_dot)

        def evaluator(times):
            times = np.asarray(times, dtype=float)
            idx = np.clip(np.searchsorted(t, times, side='right') - 1, 0, t.size - 2)
            cc, ss, cd, sd = _fundamental_step(k2[idx], times - t[idx])
            f = fund[idx]
            a_ = f[..., 0] * cc + f[..., 1] * ss
            ad = f[..., 0] * cd + f[..., 1] * sd
            b_ = f[..., 2] * cc + f[..., 3] * ss
            bd = f[..., 2] * cd + f[..., 3] * sd
            X = X0 * a_ * a_ + 2.0 * Y0 * a_ * b_ + Z0 * b_ * b_
            Y = X0 * a_ * ad + Y0 * (a_ * bd + ad * b_) + Z0 * b_ * bd
            sigma = np.sqrt(X)
            return sigma, Y / sigma

    elif method == 'ermakov':
        def rhs(time, y):
            return [y[1], -float(omega_sq(time)) * y[0] + hbar ** 2 / (4.0 * I * I * y[0] ** 3)]

        _, pieces = integrate_piecewise(rhs, [sigma0, sigma_dot0], t, breakpoints=breakpoints,
                                        rtol=rtol, atol=atol * sigma0, dense_output=True)

        def evaluator(times):
            values = evaluate_pieces(pieces, times)
            if np.ndim(times) == 0:
                return values[0, 0], values[1, 0]
            return values[0], values[1]

    else:
        raise ParameterError(f"unknown width method {method!r}")

    sigma, sigma_dot = evaluator(t)
    smallest = float(np.min(sigma))
    if smallest < WIDTH_GUARD * sigma0:
        logger.warning(f"Packet width fell to {smallest:.3g} rad (< {WIDTH_GUARD:g} sigma0); "
                       f"widths near the minimum are unreliable")
    return WidthHistory(t, sigma, sigma_dot, evaluator, I, sigma0, constants)


@dataclass
class ContrastPeak:
    t: float
    contrast: float
    sigma_L: float
    sigma_R: float


def contrast_peaks(widths_L: WidthHistory, widths_R: WidthHistory, t_center: float, window: float,
                   omega: float, particle: ParticleParams, samples: int = 20001,
                   constants: PhysicalConstants = DEFAULT_CONSTANTS) -> list[ContrastPeak]:
    """Contrast peaks in [t_center - window/2, t_center + window/2].

    Each R-arm width maximum is bracketed by +-(pi/omega)/8 and the phase
    matching condition Y_L X_R = Y_R X_L is solved there.
    """
    if window <= 0 or omega <= 0:
        raise ParameterError("peak search needs a positive window and frequency")
    grid = np.linspace(t_center - 0.5 * window, t_center + 0.5 * window, samples)
    X_R, _ = widths_R.moments(grid)
    interior = np.nonzero((X_R[1:-1] > X_R[:-2]) & (X_R[1:-1] >= X_R[2:]))[0] + 1
    half = (math.pi / omega) / 8.0

    def mismatch(t):
        XL, YL = widths_L.moments(t)
        XR, YR = widths_R.moments(t)
        return float(YL * XR - YR * XL)

    peaks = []
    for i in interior:
        lo, hi = grid[i] - half, grid[i] + half
        if lo < grid[0] or hi > grid[-1]:
            continue
        f_lo, f_hi = mismatch(lo), mismatch(hi)
        if f_lo * f_hi > 0:
            logger.debug(f"No phase-matching root next to the width maximum at {grid[i]:.6f} s")
            continue
        root = brentq(mismatch, lo, hi, xtol=1e-12)
        sL, sdL = widths_L.at(root)
        sR, sdR = widths_R.at(root)
        value = gaussian_contrast(sL, sdL, sR, sdR, particle, constants)
        peaks.append(ContrastPeak(float(root), float(value), float(sL), float(sR)))
    logger.info(f"Found {len(peaks)} contrast peaks within {window:g} s of t={t_center:.4f} s")
    return peaks


@dataclass
class StaticResult:
    """Outcome of the non-rotating scheme."""
    protocol: FieldProtocol
    left: BranchTrajectory
    right: BranchTrajectory
    delta_theta: float
    delta_p_theta: float
    gamma_theta: float
    estimate_delta_theta: float
    estimate_delta_p_theta: float
    envelope_delta_theta: float
    max_separation: float
    coupling_iterations: int
    lambda_theta: float = math.nan
    lambda_p: float = math.nan
    contrast_semiclassical: float = math.nan
    contrast_gaussian_tau4: float = math.nan
    omega_tau4: float = math.nan
    widths_L: Optional[WidthHistory] = None
    widths_R: Optional[WidthHistory] = None
    peaks: list = field(default_factory=list)

    def peaks_table(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(p.t, p.contrast, p.sigma_L, p.sigma_R) for p in self.peaks],
            columns=['t_s', 'contrast', 'sigma_L_rad', 'sigma_R_rad'],
        )

    def to_dict(self) -> dict:
        spacing = np.diff([p.t for p in self.peaks])
        return {
            'delta_theta_rad': self.delta_theta,
            'delta_p_theta_j_s': self.delta_p_theta,
            'gamma_theta_rad': self.gamma_theta,
            'estimate_delta_theta_rad': self.estimate_delta_theta,
            'estimate_delta_p_theta_j_s': self.estimate_delta_p_theta,
            'envelope_delta_theta_rad': self.envelope_delta_theta,
            'max_separation_m': self.max_separation,
            'coupling_iterations': self.coupling_iterations,
            'lambda_theta_rad': self.lambda_theta,
            'lambda_p_j_s': self.lambda_p,
            'contrast_semiclassical': self.contrast_semiclassical,
            'contrast_gaussian_tau4': self.contrast_gaussian_tau4,
            'omega_tau4_rad_s': self.omega_tau4,
            'peak_count': len(self.peaks),
            'peak_spacing_s': float(np.mean(spacing)) if spacing.size else None,
            'peak_max_contrast': max((p.contrast for p in self.peaks), default=None),
        }


def _scalar_field(protocol: FieldProtocol):
    """Scalar (B_c, eta~) lookup for hot solver loops."""
    B0, B1, eta = protocol.B0, protocol.B1, protocol.eta
    tau1, tau2 = protocol.tau1, protocol.tau2

    def lookup(t, z):
        if t < tau1:
            return abs(B0 - eta * z), -eta
        if t < tau2:
            return B1, 0.0
        return abs(B0 - eta * z), eta

    return lookup


def integrate_libration(branch: SpinBranch, protocol: FieldProtocol, particle: ParticleParams,
                        z_samples: np.ndarray, t_grid: np.ndarray, theta0: float = 0.0,
                        rtol: float = 1e-9, atol: float = 1e-12,
                        constants: PhysicalConstants = DEFAULT_CONSTANTS) -> tuple[np.ndarray, np.ndarray]:
    """theta(t), theta_dot(t) of one arm on ``t_grid`` with the full libration equation."""
    lookup = _scalar_field(protocol)
    I, mu = particle.inertia, constants.mu_nv
    d, alpha = particle.nv_offset_d, particle.nv_angle_alpha
    tau3 = protocol.tau3
    s_before, s_after = branch.s_initial, branch.s_after_flip

    def rhs(t, y):
        s = s_before if t < tau3 else s_after
        if s == 0:
            return [y[1], 0.0]
        field_c, eta_tilde = lookup(t, float(np.interp(t, t_grid, z_samples)))
        theta = y[0]
        field_nv = field_c + eta_tilde * d * math.cos(theta - alpha)
        torque = field_nv * math.sin(theta) + eta_tilde * d * math.sin(theta - alpha) * math.cos(theta)
        return [y[1], mu * s * torque / I]

    Y, _ = integrate_piecewise(rhs, [theta0, 0.0], t_grid, breakpoints=protocol.breakpoints(t_grid[-1]),
                               rtol=rtol, atol=atol)
    return Y[:, 0], Y[:, 1]


def _arm_omega_sq(branch: SpinBranch, protocol: FieldProtocol, particle: ParticleParams,
                  constants: PhysicalConstants):
    motion = BranchMotion(branch, protocol, particle, constants)

    def omega_sq(t):
        t = np.asarray(t, dtype=float)
        s = branch.spin_at(t, protocol.tau3)
        return -constants.mu_nv * s * b_com(protocol, t, motion.position(t)) / particle.inertia

    return omega_sq


def run_static_scheme(protocol: FieldProtocol, particle: ParticleParams, theta0: float = 0.0,
                      auto_close: bool = True, closure_options: Optional[dict] = None,
                      peak_window: float = 0.01, coupling_iterations: int = 5, coupling_tol: float = 1e-12,
                      steps_per_period: int = 32, width_steps_per_period: int = 64,
                      compute_widths: bool = True, compute_peaks: bool = True,
                      rtol: float = 1e-9, atol: float = 1e-12,
                      constants: PhysicalConstants = DEFAULT_CONSTANTS) -> StaticResult:
    """Close, evolve and score the {0, -1} scheme.

    Translation and libration are iterated to a fixed point through the
    cos(theta) factor of the spin force.
    """
    pair = branch_pair('static_0m1')
    if auto_close:
        protocol = close_interferometer(protocol, particle, pair, constants=constants,
                                        **(closure_options or {}))
    I, mu = particle.inertia, constants.mu_nv
    omega_high = math.sqrt(mu * protocol.B0 / I)
    t_grid = build_time_grid(protocol, protocol.tau4, (2 * math.pi / omega_high) / steps_per_period)

    arms = [evolve_branch(branch, protocol, particle, t_grid, constants=constants) for branch in pair]
    angles = [integrate_libration(arm.branch, protocol, particle, arm.z, t_grid, theta0, rtol, atol, constants)
              for arm in arms]
    iterations = 0
    for iterations in range(1, coupling_iterations + 1):
        coupled = []
        for arm, (theta, _) in zip(arms, angles):
            coupled.append(evolve_branch(
                arm.branch, protocol, particle, t_grid, theta_coupling='cos_theta', method='ode',
                theta_of_t=lambda t, th=theta: float(np.interp(t, t_grid, th)), constants=constants,
            ))
        change = max(float(np.max(np.abs(new.z - old.z))) for new, old in zip(coupled, arms))
        arms = coupled
        angles = [integrate_libration(arm.branch, protocol, particle, arm.z, t_grid, theta0, rtol, atol,
                                      constants) for arm in arms]
        logger.debug(f"Coupling iteration {iterations}: max |dz| = {change:.3g} m")
        if change < coupling_tol:
            break
    else:
        if coupling_iterations > 0:
            logger.warning(f"Translation/libration coupling not converged after {coupling_iterations} iterations")

    left, right = (arm.with_rotation(theta=theta, p_theta=I * theta_dot,
                                     extras={'theta_dot': theta_dot})
                   for arm, (theta, theta_dot) in zip(arms, angles))

    # phase of the L arm (trapped until tau3) just before the flip
    i3 = int(np.searchsorted(t_grid, protocol.tau3)) - 1
    B_c3 = float(b_com(protocol, t_grid[i3], left.z[i3]))
    omega3 = math.sqrt(mu * B_c3 / I)
    theta_eq3 = float(libration_equilibrium(B_c3, protocol.eta, particle))
    gamma = libration_phase(float(left.theta[i3]), float(left.extras['theta_dot'][i3]), theta_eq3, omega3)
    estimate = static_mismatch_estimates(protocol, particle, gamma, constants)
    envelope, _ = static_mismatch_estimates(protocol, particle, math.pi / 2, constants)

    result = StaticResult(
        protocol=protocol, left=left, right=right,
        delta_theta=float(left.theta[-1] - right.theta[-1]),
        delta_p_theta=float(left.p_theta[-1] - right.p_theta[-1]),
        gamma_theta=gamma,
        estimate_delta_theta=estimate[0], estimate_delta_p_theta=estimate[1],
        envelope_delta_theta=envelope,
        max_separation=max_separation(left, right),
        coupling_iterations=iterations,
    )
    logger.info(f"Static scheme: delta_theta(tau4)={result.delta_theta:.4g} rad, "
                f"envelope {envelope:.4g} rad, gamma_theta={gamma:.3f}")

    if compute_widths:
        _score_widths(result, particle, peak_window if compute_peaks else 0.0, width_steps_per_period,
                      constants)
    return result


def _score_widths(result: StaticResult, particle: ParticleParams, peak_window: float, steps_per_period: int,
                  constants: PhysicalConstants):
    protocol = result.protocol
    I, mu = particle.inertia, constants.mu_nv
    omega_start = math.sqrt(mu * protocol.B0 / I)
    t_end = protocol.tau4 + 0.5 * peak_window
    grid = build_time_grid(protocol, t_end, (2 * math.pi / omega_start) / steps_per_period)
    ground = GaussianPacket.ground_state(I, omega_start, constants)
    histories = []
    for arm in (result.left, result.right):
        omega_sq = _arm_omega_sq(arm.branch, protocol, particle, constants)
        histories.append(packet_width_evolution(ground, omega_sq, grid, particle, constants=constants))
    widths_L, widths_R = histories

    sigma_L, sigma_dot_L = widths_L.at(protocol.tau4)
    sigma_R, sigma_dot_R = widths_R.at(protocol.tau4)
    # Delta theta(tau4) uses the inertia where a mass would be dimensionally wrong
    logger.debug("Angular coherence length built from I, not m")
    lambda_theta, lambda_p = coherence_lengths(ground.sigma, float(sigma_L), constants)
    result.widths_L, result.widths_R = widths_L, widths_R
    result.lambda_theta, result.lambda_p = lambda_theta, lambda_p
    result.contrast_semiclassical = semiclassical_contrast(result.delta_theta, result.delta_p_theta,
                                                           lambda_theta, lambda_p)
    result.contrast_gaussian_tau4 = gaussian_contrast(sigma_L, sigma_dot_L, sigma_R, sigma_dot_R,
                                                      particle, constants)
    B_tau4 = float(b_com(protocol, protocol.tau4, result.right.z[-1]))
    result.omega_tau4 = math.sqrt(mu * B_tau4 / I)
    if peak_window > 0:
        result.peaks = contrast_peaks(widths_L, widths_R, protocol.tau4, peak_window, result.omega_tau4,
                                      particle, constants=constants)


def contrast_vs_offset(protocol: FieldProtocol, particle: ParticleParams, d_sin_alpha_grid,
                       theta0: float = 0.0, alpha: Optional[float] = None,
                       constants: PhysicalConstants = DEFAULT_CONSTANTS) -> pd.DataFrame:
    """Semiclassical contrast of the static scheme against the NV offset d sin(alpha).

    ``protocol`` is used as given (already closed); the coherence lengths do
    not depend on the offset and are computed once.
    """
    grid = np.asarray(d_sin_alpha_grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0):
        raise ParameterError("offset grid must be non-empty and non-negative")
    alpha = particle.nv_angle_alpha if alpha is None else alpha
    if math.sin(alpha) <= 0:
        alpha = math.pi / 2
    base = run_static_scheme(protocol, ParticleParams(particle.mass, particle.density, particle.inertia),
                             theta0=theta0, auto_close=False, coupling_iterations=0, compute_peaks=False,
                             constants=constants)
    rows = []
    for value in grid:
        offset_particle = ParticleParams(particle.mass, particle.density, particle.inertia,
                                         nv_offset_d=float(value) / math.sin(alpha), nv_angle_alpha=alpha)
        run = run_static_scheme(protocol, offset_particle, theta0=theta0, auto_close=False,
                                coupling_iterations=0, compute_widths=False, constants=constants)
        contrast = semiclassical_contrast(run.delta_theta, run.delta_p_theta, base.lambda_theta, base.lambda_p)
        rows.append((float(value), run.delta_theta, run.delta_p_theta, contrast))
        logger.info(f"d sin(alpha)={value:.3g} m: delta_theta={run.delta_theta:.3g} rad, contrast={contrast:.3g}")
    return pd.DataFrame(rows, columns=['d_sin_alpha_m', 'delta_theta_rad', 'delta_p_theta_j_s', 'contrast'])


def offset_crossing(table: pd.DataFrame, level: float = 0.5) -> Optional[float]:
    """First d sin(alpha) where the contrast falls through ``level`` (linear interpolation)."""
    x = table['d_sin_alpha_m'].to_numpy()
    y = table['contrast'].to_numpy()
    for i in range(len(x) - 1):
        if y[i] >= level > y[i + 1]:
            return float(x[i] + (y[i] - level) * (x[i + 1] - x[i]) / (y[i] - y[i + 1]))
    return None
