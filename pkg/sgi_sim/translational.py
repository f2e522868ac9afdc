"""Centre-of-mass motion of the two interferometer arms.

Along z the particle feels the diamagnetic trap of frequency
Omega = sqrt(-chi_rho/mu0)|eta~| centred at Z0 = B0/eta, and the spin force
-mu s eta~ cos(theta). Stage 2 (eta~ = 0) is free flight. Within stages 1
and 3 the motion is harmonic about

    z_eq = Z0 - s eta~ mu / (m Omega^2)

and is solved in closed form. The ODE path handles the cos(theta) coupling
of the static scheme and serves as an oracle for the closed form.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core_model import DEFAULT_CONSTANTS, ParticleParams, PhysicalConstants
from .errors import ClosureError, ParameterError, ProtocolError
from .field_protocol import FieldProtocol, gradient_sign
from .ode import integrate_piecewise

logger = logging.getLogger(__name__)

# allowed (s_initial, s_after_flip) pairs besides "no flip"
FLIP_MAP = {(1, -1), (-1, 1), (0, -1), (-1, 0)}


@dataclass(frozen=True)
class SpinBranch:
    """Spin history of one arm: s_initial before tau3, s_after_flip after."""
    s_initial: int
    s_after_flip: int
    label: str

    def __post_init__(self):
        for s in (self.s_initial, self.s_after_flip):
            if s not in (-1, 0, 1):
                raise ParameterError(f"spin projection must be -1, 0 or +1, got {s}")
        if self.s_initial != self.s_after_flip and (self.s_initial, self.s_after_flip) not in FLIP_MAP:
            raise ParameterError(f"{self.s_initial} -> {self.s_after_flip} is not a supported spin flip")
        if self.label not in ('L', 'R'):
            raise ParameterError(f"branch label must be 'L' or 'R', got {self.label!r}")

    def spin_at(self, t, tau3: float):
        """Spin projection at time t (the flip time belongs to the new value)."""
        value = np.where(np.asarray(t) < tau3, self.s_initial, self.s_after_flip)
        return int(value) if value.ndim == 0 else value


def branch_pair(scheme: str) -> tuple[SpinBranch, SpinBranch]:
    """Arm pair of the gyroscopic (+-1) or static ({0,-1}) scheme."""
    if scheme == 'gyroscopic_pm1':
        return SpinBranch(1, -1, 'L'), SpinBranch(-1, 1, 'R')
    if scheme == 'static_0m1':
        return SpinBranch(-1, 0, 'L'), SpinBranch(0, -1, 'R')
    raise ParameterError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class TranslationalState:
    z: float
    p_z: float
    t: float


@dataclass(frozen=True, eq=False)
class BranchTrajectory:
    """Sampled translational and rotational history of one arm.

    Rotational columns are NaN until a rotational solver fills them.
    """
    t: np.ndarray
    z: np.ndarray
    p_z: np.ndarray
    branch: SpinBranch
    theta: Optional[np.ndarray] = None
    p_theta: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.t.ndim != 1 or np.any(np.diff(self.t) <= 0):
            raise ParameterError("trajectory times must be strictly increasing")
        n = self.t.size
        for name in ('theta', 'p_theta', 'phi', 'psi'):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.full(n, np.nan))
        for name in ('z', 'p_z', 'theta', 'p_theta', 'phi', 'psi'):
            if getattr(self, name).shape != (n,):
                raise ParameterError(f"column {name} does not match the time grid")

    def with_rotation(self, **columns) -> 'BranchTrajectory':
        extras = dict(self.extras)
        extras.update(columns.pop('extras', {}))
        return replace(self, extras=extras, **columns)

    @property
    def final(self) -> TranslationalState:
        return TranslationalState(float(self.z[-1]), float(self.p_z[-1]), float(self.t[-1]))


def trap_frequency(eta_tilde, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Omega = sqrt(-chi_rho/mu0) |eta~|."""
    return math.sqrt(-constants.chi_rho / constants.mu0) * np.abs(eta_tilde)


def superposition_size_eq(particle: ParticleParams, eta: float,
                          constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Equilibrium separation 2 mu0 mu / (-chi_rho m eta) between the s=+1 and s=-1 arms."""
    if eta <= 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    return 2.0 * constants.mu0 * constants.mu_nv / (-constants.chi_rho * particle.mass * eta)


def equilibrium_position(s: int, eta_tilde: float, particle: ParticleParams, Z0: float,
                         constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Centre of the harmonic motion within a trapping stage.

    The spin force is -mu s eta~ (see ``stage_energy``), so
        z_eq = Z0 - s eta~ mu / (m Omega^2)
    and the s = +1 arm sits below Z0 for eta~ > 0. Written with the opposite
    sign convention the branches only swap; the separation is unchanged.
    """
    omega = trap_frequency(eta_tilde, constants)
    if omega == 0:
        raise ParameterError("no equilibrium in a field-free stage")
    return Z0 - s * eta_tilde * constants.mu_nv / (particle.mass * omega * omega)


def stage_energy(z, p_z, s, eta_tilde, particle: ParticleParams, Z0: float,
                 constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Energy p^2/2m + m Omega^2 (z - Z0)^2 / 2 + mu s eta~ z, conserved inside a stage."""
    omega = trap_frequency(eta_tilde, constants)
    m = particle.mass
    return p_z ** 2 / (2 * m) + 0.5 * m * omega ** 2 * (z - Z0) ** 2 + constants.mu_nv * s * eta_tilde * z


def _segments(protocol: FieldProtocol, t_end: float):
    edges = [0.0] + protocol.breakpoints(t_end) + [t_end]
    return list(zip(edges[:-1], edges[1:]))


class BranchMotion:
    """Closed-form piecewise solution z(t), p_z(t) for one arm starting at rest at z=0."""

    def __init__(self, branch: SpinBranch, protocol: FieldProtocol, particle: ParticleParams,
                 constants: PhysicalConstants = DEFAULT_CONSTANTS, t_end: Optional[float] = None):
        self.branch = branch
        self.protocol = protocol
        self.particle = particle
        self.constants = constants
        self.t_end = protocol.tau4 if t_end is None else t_end
        self._starts = []
        z, p = 0.0, 0.0
        for start, stop in _segments(protocol, self.t_end):
            self._starts.append((start, z, p))
            z, p = self._advance(start, z, p, stop - start)

    def _segment_params(self, start: float):
        eta_tilde = gradient_sign(self.protocol, start)
        s = self.branch.spin_at(start, self.protocol.tau3)
        omega = trap_frequency(eta_tilde, self.constants)
        return eta_tilde, s, omega

    def _advance(self, start, z, p, dt):
        eta_tilde, s, omega = self._segment_params(start)
        m = self.particle.mass
        if omega == 0:
            return z + p / m * dt, p
        z_eq = equilibrium_position(s, eta_tilde, self.particle, self.protocol.Z0, self.constants)
        u = z - z_eq
        v = p / m
        c, sn = np.cos(omega * dt), np.sin(omega * dt)
        return z_eq + u * c + v / omega * sn, m * (-u * omega * sn + v * c)

    def state(self, t):
        """(z, p_z) at times t (vectorized, right-continuous at breakpoints)."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        z = np.empty_like(t)
        p = np.empty_like(t)
        starts = [s[0] for s in self._starts]
        idx = np.clip(np.searchsorted(starts, t, side='right') - 1, 0, len(starts) - 1)
        for i, (start, z0, p0) in enumerate(self._starts):
            mask = idx == i
            if mask.any():
                z[mask], p[mask] = self._advance(start, z0, p0, t[mask] - start)
        if scalar:
            return float(z[0]), float(p[0])
        return z, p

    def position(self, t):
        return self.state(t)[0]


def evolve_branch(branch: SpinBranch, protocol: FieldProtocol, particle: ParticleParams,
                  t_grid, theta_coupling: str = 'none', theta_of_t: Optional[Callable] = None,
                  method: str = 'closed_form', constants: PhysicalConstants = DEFAULT_CONSTANTS,
                  rtol: float = 1e-10, atol: float = 1e-16) -> BranchTrajectory:
    """Translational trajectory of one arm sampled on ``t_grid``.

    Args:
        theta_coupling: 'none' (cos(theta) = 1) or 'cos_theta' (force uses theta_of_t)
        method: 'closed_form' or 'ode'; cos_theta coupling requires 'ode'
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0:
        raise ProtocolError("trajectories start at t = 0")
    if theta_coupling not in ('none', 'cos_theta'):
        raise ParameterError(f"unknown theta_coupling {theta_coupling!r}")
    if theta_coupling == 'cos_theta':
        if method == 'closed_form':
            raise ParameterError("cos_theta coupling has no closed form; use method='ode'")
        if theta_of_t is None:
            raise ParameterError("cos_theta coupling needs theta_of_t")

    if method == 'closed_form':
        motion = BranchMotion(branch, protocol, particle, constants, t_end=t_grid[-1])
        z, p = motion.state(t_grid)
        return BranchTrajectory(t=t_grid, z=z, p_z=p, branch=branch)
    if method != 'ode':
        raise ParameterError(f"unknown method {method!r}")

    mu, m = constants.mu_nv, particle.mass
    Z0 = protocol.Z0
    omega_sq = (-constants.chi_rho / constants.mu0) * protocol.eta ** 2

    def rhs(t, y):
        eta_tilde = gradient_sign(protocol, t)
        s = branch.spin_at(t, protocol.tau3)
        cos_theta = math.cos(theta_of_t(t)) if theta_coupling == 'cos_theta' else 1.0
        force = -mu * s * eta_tilde * cos_theta
        if eta_tilde != 0.0:
            force += m * omega_sq * (Z0 - y[0])
        return [y[1], force / m]

    Y, _ = integrate_piecewise(
        rhs, [0.0, 0.0], t_grid, breakpoints=protocol.breakpoints(t_grid[-1]),
        rtol=rtol, atol=atol,
    )
    return BranchTrajectory(t=t_grid, z=Y[:, 0], p_z=m * Y[:, 1], branch=branch)


def max_separation(traj_L: BranchTrajectory, traj_R: BranchTrajectory) -> float:
    return float(np.max(np.abs(traj_L.z - traj_R.z)))


def closure_residual(protocol: FieldProtocol, particle: ParticleParams, pair: tuple[SpinBranch, SpinBranch],
                     constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """(z_L - z_R, p_L - p_R) at tau4."""
    left = BranchMotion(pair[0], protocol, particle, constants)
    right = BranchMotion(pair[1], protocol, particle, constants)
    zL, pL = left.state(protocol.tau4)
    zR, pR = right.state(protocol.tau4)
    return np.array([zL - zR, pL - pR])


def close_interferometer(protocol_template: FieldProtocol, particle: ParticleParams,
                         pair: tuple[SpinBranch, SpinBranch], tol_z: float = 1e-9,
                         tol_p: Optional[float] = None, unknowns: tuple[str, str] = ('tau3', 'tau4'),
                         max_iter: int = 50, constants: PhysicalConstants = DEFAULT_CONSTANTS,
                         fd_step: float = 1e-7) -> FieldProtocol:
    """Adjust two stage times so both arms meet in position and momentum at tau4.

    Damped Newton iteration with a finite-difference Jacobian on residuals
    scaled by the tolerances. The template times are the initial guess.
    """
    if tol_p is None:
        tol_p = particle.mass * 1e-9
    if len(unknowns) != 2 or len(set(unknowns)) != 2:
        raise ParameterError("closure needs exactly two distinct unknown stage times")
    scale = np.array([tol_z, tol_p])

    def scaled(protocol):
        return closure_residual(protocol, particle, pair, constants) / scale

    protocol = protocol_template
    r = scaled(protocol)
    norm = float(np.max(np.abs(r)))
    logger.info(f"Closure start: {unknowns} = {[getattr(protocol, u) for u in unknowns]}, residual {norm:.3g}")
    for iteration in range(max_iter):
        if norm <= 1.0:
            break
        x = np.array([getattr(protocol, u) for u in unknowns])
        jac = np.empty((2, 2))
        for j, name in enumerate(unknowns):
            shifted = protocol.with_times(**{name: x[j] + fd_step})
            jac[:, j] = (scaled(shifted) - r) / fd_step
        try:
            dx = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            raise ClosureError("singular closure Jacobian", residuals=tuple(r * scale), protocol=protocol)

        step = 1.0
        while step > 1e-6:
            try:
                trial = protocol.with_times(**{u: float(v) for u, v in zip(unknowns, x + step * dx)})
            except ProtocolError:
                step *= 0.5
                continue
            r_trial = scaled(trial)
            n_trial = float(np.max(np.abs(r_trial)))
            if n_trial < norm:
                protocol, r, norm = trial, r_trial, n_trial
                break
            step *= 0.5
        else:
            raise ClosureError(f"closure line search stalled at residual {norm:.3g}",
                               residuals=tuple(r * scale), protocol=protocol)
        logger.debug(f"Closure iteration {iteration + 1}: step {step:g}, residual {norm:.3g}")

    if norm > 1.0:
        raise ClosureError(f"closure did not converge in {max_iter} iterations (residual {norm:.3g})",
                           residuals=tuple(r * scale), protocol=protocol)
    dz, dp = r * scale
    logger.info(f"Closure converged: tau3={protocol.tau3:.6f} s, tau4={protocol.tau4:.6f} s, "
                f"dz={dz:.3g} m, dp/m={dp / particle.mass:.3g} m/s")
    return protocol
