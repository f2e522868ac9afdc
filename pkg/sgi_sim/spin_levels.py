"""Three-level NV spin in the frame co-rotating with the particle.

In the basis {s3 = +1, 0, -1} the effective Hamiltonian is

    H(t) = [[D+,          W e^{-iw t}, 0          ],
            [W e^{iw t},  0,           W e^{-iw t}],
            [0,           W e^{iw t},  D-         ]]

with D+- = D +- mu B cos(theta0) -+ hbar w and W = mu B sin(theta0)/sqrt(2).
H(t) = R(t) H0 R(t)^dagger with R = diag(e^{-iwt}, 1, e^{iwt}), so the
evolution is exact in the rotating frame:

    psi(t) = R(t) exp(-i K t/hbar) psi(0),  K = H0 - hbar diag(w, 0, -w)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd
from scipy.linalg import eigh, expm

from .core_model import DEFAULT_CONSTANTS, ParticleParams, PhysicalConstants
from .errors import IntegrationError, ParameterError

logger = logging.getLogger(__name__)

BASIS = ('plus', 'zero', 'minus')
NORM_TOLERANCE = 1e-8


@dataclass(frozen=True)
class SpinHamiltonianParams:
    """Diagonal detunings, coupling W and rotation rate of the effective spin Hamiltonian."""
    Delta_plus: float
    Delta_minus: float
    W: float
    omega0: float
    hbar: float = DEFAULT_CONSTANTS.hbar

    def __post_init__(self):
        if self.W < 0:
            raise ParameterError(f"coupling W must be non-negative, got {self.W}")
        if self.omega0 < 0:
            raise ParameterError(f"omega0 must be non-negative, got {self.omega0}")

    @classmethod
    def from_physics(cls, B: float, theta0: float, omega0: float,
                     constants: PhysicalConstants = DEFAULT_CONSTANTS) -> 'SpinHamiltonianParams':
        mu_b = constants.mu_nv * B
        hw = constants.hbar * omega0
        return cls(
            Delta_plus=constants.D_zfs + mu_b * math.cos(theta0) - hw,
            Delta_minus=constants.D_zfs - mu_b * math.cos(theta0) + hw,
            W=mu_b * math.sin(theta0) / math.sqrt(2.0),
            omega0=omega0,
            hbar=constants.hbar,
        )

    @property
    def H0(self) -> np.ndarray:
        W = self.W
        return np.array([[self.Delta_plus, W, 0.0], [W, 0.0, W], [0.0, W, self.Delta_minus]], dtype=complex)

    @property
    def rotating_frame_matrix(self) -> np.ndarray:
        """K = H0 - hbar diag(omega0, 0, -omega0)."""
        shift = self.hbar * self.omega0
        return self.H0 - np.diag([shift, 0.0, -shift]).astype(complex)


@dataclass(frozen=True)
class SpinAmplitudes:
    c_plus: complex
    c_zero: complex
    c_minus: complex

    def __post_init__(self):
        norm = abs(self.c_plus) ** 2 + abs(self.c_zero) ** 2 + abs(self.c_minus) ** 2
        if abs(norm - 1.0) > 1e-10:
            raise ParameterError(f"spin state must be normalized, got norm {norm:.12g}")

    @classmethod
    def basis(cls, level: str) -> 'SpinAmplitudes':
        if level not in BASIS:
            raise ParameterError(f"unknown level {level!r}, expected one of {BASIS}")
        values = [0j, 0j, 0j]
        values[BASIS.index(level)] = 1 + 0j
        return cls(*values)

    @classmethod
    def from_array(cls, values) -> 'SpinAmplitudes':
        c = np.asarray(values, dtype=complex)
        return cls(complex(c[0]), complex(c[1]), complex(c[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.c_plus, self.c_zero, self.c_minus], dtype=complex)

    def populations(self) -> np.ndarray:
        return np.abs(self.as_array()) ** 2


@dataclass(eq=False)
class SpinEvolution:
    t: np.ndarray
    amplitudes: np.ndarray
    initial_level: int
    method: str

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def transfer(self) -> np.ndarray:
        """Population that left the initial level."""
        return 1.0 - self.populations[:, self.initial_level]

    @property
    def max_transfer(self) -> float:
        return float(np.max(self.transfer))

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.populations.sum(axis=1) - 1.0)))

    def state_at(self, index: int) -> SpinAmplitudes:
        return SpinAmplitudes.from_array(self.amplitudes[index])


def build_spin_hamiltonian(t, params: SpinHamiltonianParams) -> np.ndarray:
    """3x3 Hermitian Hamiltonian at time t."""
    rot = np.exp(-1j * params.omega0 * t)
    W = params.W
    return np.array([
        [params.Delta_plus, W * rot, 0.0],
        [W * np.conj(rot), 0.0, W * rot],
        [0.0, W * np.conj(rot), params.Delta_minus],
    ], dtype=complex)


def _frame(omega0: float, t) -> np.ndarray:
    """Diagonal of R(t) for each t, shape (n, 3)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.stack([np.exp(-1j * omega0 * t), np.ones_like(t, dtype=complex), np.exp(1j * omega0 * t)], axis=1)


def _initial_level(initial: SpinAmplitudes) -> int:
    return int(np.argmax(initial.populations()))


def max_step(params: SpinHamiltonianParams) -> float:
    """Step cap 2 pi / (200 max(|Delta|/hbar, omega0)) of the piecewise stepper."""
    fastest = max(abs(params.Delta_plus) / params.hbar, abs(params.Delta_minus) / params.hbar, params.omega0)
    if fastest == 0:
        return math.inf
    return 2.0 * math.pi / (200.0 * fastest)


def evolve_spin(initial: SpinAmplitudes, params: SpinHamiltonianParams, t_end: float, samples: int = 1001,
                method: str = 'rotating_frame', dt_control: float = None) -> SpinEvolution:
    """Unitary evolution sampled on ``samples`` equally spaced times in [0, t_end].

    'rotating_frame' diagonalizes K once and is exact at every sample.
    'piecewise' multiplies short steps exp(-i H(t_mid) dt/hbar), each with
    dt <= ``dt_control`` (default ``max_step(params)``).
    """
    if t_end <= 0 or samples < 2:
        raise ParameterError("spin evolution needs t_end > 0 and at least two samples")
    t = np.linspace(0.0, t_end, samples)
    psi0 = initial.as_array()
    hbar = params.hbar

    if method == 'rotating_frame':
        energies, vectors = eigh(params.rotating_frame_matrix)
        coeffs = vectors.conj().T @ psi0
        phases = np.exp(-1j * np.outer(t, energies) / hbar)
        amplitudes = (phases * coeffs) @ vectors.T
        amplitudes *= _frame(params.omega0, t)
    elif method == 'piecewise':
        dt_max = dt_control or max_step(params)
        amplitudes = np.empty((samples, 3), dtype=complex)
        amplitudes[0] = psi0
        psi = psi0.copy()
        interval = t[1] - t[0]
        n_sub = max(1, int(math.ceil(interval / dt_max)))
        h = interval / n_sub
        step = expm(-1j * params.H0 * h / hbar)
        for k in range(samples - 1):
            start = t[k]
            for j in range(n_sub):
                phase = np.exp(-1j * params.omega0 * (start + (j + 0.5) * h))
                r = np.array([phase, 1.0, np.conj(phase)])
                psi = r * (step @ (np.conj(r) * psi))
            amplitudes[k + 1] = psi
        logger.debug(f"Piecewise spin evolution: {n_sub * (samples - 1)} steps of {h:.3g} s")
    else:
        raise ParameterError(f"unknown spin evolution method {method!r}")

    result = SpinEvolution(t, amplitudes, _initial_level(initial), method)
    if result.norm_drift > NORM_TOLERANCE:
        raise IntegrationError(f"spin norm drifted by {result.norm_drift:.3g}")
    return result


@dataclass
class OffResonanceReport:
    margin: float
    margin_plus: float
    margin_minus: float
    factor: float
    flags: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        return {
            'margin': self.margin,
            'margin_plus': self.margin_plus,
            'margin_minus': self.margin_minus,
            'factor': self.factor,
            'flags': dict(self.flags),
            'passed': self.passed,
        }


def off_resonance_margin(params: SpinHamiltonianParams, factor: float = 1e3) -> OffResonanceReport:
    """min(|Delta+|, |Delta-|)/W with a PASS flag per branch."""
    if params.W == 0:
        margin_plus = margin_minus = math.inf
    else:
        margin_plus = abs(params.Delta_plus) / params.W
        margin_minus = abs(params.Delta_minus) / params.W
    report = OffResonanceReport(
        margin=min(margin_plus, margin_minus),
        margin_plus=margin_plus,
        margin_minus=margin_minus,
        factor=factor,
        flags={'plus': margin_plus >= factor, 'minus': margin_minus >= factor},
    )
    if not report.passed:
        logger.warning(f"Spin levels not off-resonant: margin {report.margin:.3g} < {factor:g}")
    return report


def two_level_transfer_bound(params: SpinHamiltonianParams, level: str = 'minus') -> float:
    """Peak Rabi transfer 4W^2/(4W^2 + Delta^2) out of an outer level into s3 = 0.

    Delta is the rotating-frame detuning of that level.
    """
    K = params.rotating_frame_matrix.real
    if level == 'plus':
        detuning = K[0, 0]
    elif level == 'minus':
        detuning = K[2, 2]
    else:
        raise ParameterError(f"transfer bound is defined for 'plus' or 'minus', got {level!r}")
    coupling = 4.0 * params.W ** 2
    if coupling == 0:
        return 0.0
    return coupling / (coupling + detuning ** 2)


def edh_torque(s_vector, L_vector, B_vector, particle: ParticleParams,
               constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Zeeman plus Einstein-de Haas torque eps_ijk (mu B_j s_k + hbar s_j L_k / I)."""
    s = np.asarray(s_vector, dtype=float)
    L = np.asarray(L_vector, dtype=float)
    B = np.asarray(B_vector, dtype=float)
    return constants.mu_nv * np.cross(B, s) + constants.hbar * np.cross(s, L) / particle.inertia


def edh_ratio(omega0: float, B: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """hbar omega0 / (mu B): size of the EdH term against the Zeeman torque."""
    if B <= 0:
        raise ParameterError("field strength must be positive")
    return constants.hbar * omega0 / (constants.mu_nv * B)


def resonance_scan(params_factory: Callable[[float], SpinHamiltonianParams], omega_grid, window: float,
                   initial: str = 'plus', samples: int = 20001) -> pd.DataFrame:
    """Maximum transfer out of ``initial`` over ``window`` for each rotation rate."""
    rows = []
    start = SpinAmplitudes.basis(initial)
    for omega0 in np.asarray(omega_grid, dtype=float):
        params = params_factory(float(omega0))
        evolution = evolve_spin(start, params, window, samples=samples)
        rows.append((float(omega0), evolution.max_transfer,
                     two_level_transfer_bound(params, initial if initial != 'zero' else 'minus')))
    return pd.DataFrame(rows, columns=['omega0_rad_s', 'max_transfer', 'two_level_bound'])
