"""Time-staged magnetic field of the interferometer.

Stage 1 (t < tau1): B = (B0 - eta z) z^ + eta x x^
Stage 2 (tau1 <= t < tau2): B = B1 z^
Stage 3 (t >= tau2): B = -(B0 - eta z) z^ - eta x x^

Stage intervals are half-open: the value at tau1 and tau2 belongs to the
following stage.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ProtocolError


@dataclass(frozen=True)
class FieldProtocol:
    """Field magnitudes, gradient and stage times (tau3 spin flip, tau4 measurement)."""
    B0: float
    B1: float
    eta: float
    tau1: float
    tau2: float
    tau3: float
    tau4: float

    def __post_init__(self):
        if not (self.B0 > 0 and self.B1 > 0 and self.eta > 0):
            raise ProtocolError(f"B0, B1, eta must be positive, got B0={self.B0}, B1={self.B1}, eta={self.eta}")
        if not 0 < self.tau1 < self.tau2 < self.tau3 < self.tau4:
            raise ProtocolError(
                f"stage times must satisfy 0 < tau1 < tau2 < tau3 < tau4, got "
                f"{self.tau1}, {self.tau2}, {self.tau3}, {self.tau4}"
            )
        if not math.isfinite(self.Z0):
            raise ProtocolError("Z0 = B0/eta is not finite")

    @property
    def Z0(self) -> float:
        return self.B0 / self.eta

    def with_times(self, **taus) -> 'FieldProtocol':
        """Validated copy with some of tau1..tau4 replaced."""
        unknown = set(taus) - {'tau1', 'tau2', 'tau3', 'tau4'}
        if unknown:
            raise ProtocolError(f"unknown stage times: {sorted(unknown)}")
        return replace(self, **taus)

    def breakpoints(self, t_end: float = None) -> list[float]:
        """Stage boundaries and the spin-flip time inside (0, t_end)."""
        t_end = self.tau4 if t_end is None else t_end
        return [t for t in (self.tau1, self.tau2, self.tau3) if 0 < t < t_end]


def _check_time(t):
    if np.any(np.asarray(t) < 0):
        raise ProtocolError(f"time must be non-negative, got {t}")


def stage_index(protocol: FieldProtocol, t):
    """Stage number 1, 2 or 3 (vectorized)."""
    _check_time(t)
    t = np.asarray(t, dtype=float)
    stage = np.where(t < protocol.tau1, 1, np.where(t < protocol.tau2, 2, 3))
    return int(stage) if stage.ndim == 0 else stage


def gradient_sign(protocol: FieldProtocol, t):
    """Signed gradient eta~(t): -eta, 0, +eta in stages 1, 2, 3."""
    _check_time(t)
    t = np.asarray(t, dtype=float)
    value = np.where(t < protocol.tau1, -protocol.eta, np.where(t < protocol.tau2, 0.0, protocol.eta))
    return float(value) if value.ndim == 0 else value


def field_direction(protocol: FieldProtocol, t):
    """+1 in stages 1 and 2, -1 in the reversed third stage."""
    _check_time(t)
    t = np.asarray(t, dtype=float)
    value = np.where(t < protocol.tau2, 1.0, -1.0)
    return float(value) if value.ndim == 0 else value


def field_vector(protocol: FieldProtocol, t, z, x=0.0):
    """(B_z, B_x) at time t and position (z, x)."""
    _check_time(t)
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    gradient_bz = protocol.B0 - protocol.eta * z
    gradient_bx = protocol.eta * x
    in_stage2 = (t >= protocol.tau1) & (t < protocol.tau2)
    sign = np.where(t < protocol.tau1, 1.0, -1.0)
    bz = np.where(in_stage2, protocol.B1, sign * gradient_bz)
    bx = np.where(in_stage2, 0.0, sign * gradient_bx)
    if bz.ndim == 0:
        return float(bz), float(bx)
    return bz, bx


def b_com(protocol: FieldProtocol, t, z):
    """Field strength |B_z| at the centre of mass (x = 0)."""
    bz, _ = field_vector(protocol, t, z, 0.0)
    return np.abs(bz) if isinstance(bz, np.ndarray) else abs(bz)


def b_nv(B_c, eta_tilde, theta, psi, d, alpha):
    """Field at the NV site: B_c + eta~ d (cos(alpha) cos(theta) + sin(theta) sin(alpha) cos(psi))."""
    return B_c + eta_tilde * d * (np.cos(alpha) * np.cos(theta) + np.sin(theta) * np.sin(alpha) * np.cos(psi))
