"""Shared piecewise ODE driver.

Right-hand sides in this package are discontinuous at stage boundaries and
at the spin flip, so every integration is split at those breakpoints and
restarted from the left limit of the previous piece.
"""

import logging

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError

logger = logging.getLogger(__name__)


def integrate_piecewise(rhs, y0, t_eval, breakpoints=(), method='DOP853', rtol=1e-9, atol=1e-12,
                        max_step=np.inf, events=None, dense_output=False):
    """Integrate ``rhs(t, y)`` over ``t_eval[0]..t_eval[-1]`` restarting at breakpoints.

    Args:
        rhs: Callable f(t, y)
        y0: Initial state at t_eval[0]
        t_eval: Increasing sample times; first and last define the span
        breakpoints: Times where the right-hand side jumps
        method, rtol, atol, max_step: forwarded to solve_ivp
        events: Terminal events; a triggered event raises IntegrationError
        dense_output: Keep the piecewise continuous solutions

    Returns:
        Tuple (Y, pieces) with Y of shape (len(t_eval), len(y0)) and the list of
        (t_start, t_stop, OdeSolution) pieces when dense_output is set
    """
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size < 2 or np.any(np.diff(t_eval) <= 0):
        raise IntegrationError("t_eval must be strictly increasing with at least two points")
    t0, t1 = t_eval[0], t_eval[-1]
    edges = [t0] + sorted(b for b in set(breakpoints) if t0 < b < t1) + [t1]

    y = np.asarray(y0, dtype=float)
    out = np.empty((t_eval.size, y.size))
    out[0] = y
    pieces = []
    for start, stop in zip(edges[:-1], edges[1:]):
        last = stop == t1
        mask = (t_eval > start) & ((t_eval <= stop) if last else (t_eval < stop))
        inner = np.nextafter(stop, start)

        def piece_rhs(t, y, _start=start, _inner=inner):
            # stage lookups must see the piece the step belongs to
            return rhs(min(max(t, _start), _inner), y)

        sol = solve_ivp(
            piece_rhs, (start, stop), y,
            method=method, rtol=rtol, atol=atol, max_step=max_step,
            t_eval=np.append(t_eval[mask], stop) if not last else t_eval[mask],
            events=events, dense_output=dense_output,
        )
        if sol.status == 1:
            raise IntegrationError(f"terminal event triggered at t={sol.t[-1]:.6g} s")
        if not sol.success:
            raise IntegrationError(f"integration failed on [{start:.6g}, {stop:.6g}] s: {sol.message}")
        n = int(mask.sum())
        if n:
            out[mask] = sol.y[:, :n].T
        y = sol.y[:, -1]
        if dense_output:
            pieces.append((start, stop, sol.sol))
        logger.debug(f"Piece [{start:.6g}, {stop:.6g}] s: {sol.nfev} evaluations")
    return out, pieces


def evaluate_pieces(pieces, t):
    """Evaluate piecewise dense output at times ``t`` (right-continuous at breakpoints)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    result = None
    for i, (start, stop, sol) in enumerate(pieces):
        last = i == len(pieces) - 1
        mask = (t >= start) & ((t <= stop) if last else (t < stop))
        if not mask.any():
            continue
        values = sol(t[mask])
        if result is None:
            result = np.full((values.shape[0], t.size), np.nan)
        result[:, mask] = values
    if result is None:
        raise IntegrationError("requested times lie outside the integrated span")
    return result
