"""Adaptive Dormand-Prince 5(4) integrator for (batched) matrix ODEs.

The state is an array whose leading axis indexes independent members; the
error norm is the RMS over each member, maximised across members, so one step
size serves the whole batch. After every accepted step the trailing two axes
are re-symmetrised, ``y <- (y + y^dag) / 2``.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import IntegrationError

# Dormand & Prince (1980) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _B_LOW

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ORDER = 5


def _symmetrize(y: np.ndarray) -> np.ndarray:
    return 0.5 * (y + np.conj(np.swapaxes(y, -1, -2)))


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    ratio = np.abs(err) / scale
    members = ratio.reshape(ratio.shape[0], -1)
    return float(np.max(np.sqrt(np.mean(members**2, axis=1))))


def _initial_step(fun, t0, y0, f0, rtol, atol, direction_span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((np.abs(y0) / scale) ** 2))
    d1 = np.sqrt(np.mean((np.abs(f0) / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = fun(t0 + h0, y1)
    d2 = np.sqrt(np.mean((np.abs(f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / ORDER)
    return min(100 * h0, h1, direction_span)


def integrate(
    fun: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t_stops: Sequence[float],
    callback: Callable[[int, float, np.ndarray], None],
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
    max_step: float = np.inf,
    breakpoints: Sequence[float] = (),
    h_init: Optional[float] = None,
    on_step: Optional[Callable[[float, np.ndarray], None]] = None,
) -> float:
    """Integrate ``dy/dt = fun(t, y)`` from ``t0`` through every time in ``t_stops``.

    ``callback(j, t, y)`` fires when the solution lands exactly on
    ``t_stops[j]``; steps are shortened to hit those times and every
    breakpoint of a piecewise-defined right-hand side. ``on_step`` sees every
    accepted step. Returns the last accepted step size so callers can chain
    segments.
    """
    stops = np.asarray(t_stops, dtype=float)
    if stops.size and (np.any(np.diff(stops) < 0) or stops[0] < t0):
        raise ValueError("t_stops must be sorted and not precede t0")
    t = float(t0)
    y = np.array(y0, dtype=complex)
    j = 0
    while j < stops.size and stops[j] <= t:
        callback(j, t, y)
        j += 1
    if j == stops.size:
        return h_init or 0.0
    t_final = float(stops[-1])
    walls = sorted({float(b) for b in breakpoints if t < b < t_final})
    cuts = sorted(set(walls) | {float(s) for s in stops[j:]})
    bounds = [t] + walls + [np.inf]

    seg = 0
    lo, hi = bounds[0], bounds[1]

    def feval(ts, ys):
        # Keep stage times strictly inside the current smooth segment so a
        # discontinuous envelope is never sampled on the wrong side.
        pad = 1e-13 * max(1.0, abs(ts))
        if seg > 0:
            ts = max(ts, lo + pad)
        if np.isfinite(hi):
            ts = min(ts, hi - pad)
        return fun(ts, ys)

    f = feval(t, y)
    h = h_init if h_init else _initial_step(feval, t, y, f, rel_tol, abs_tol, cuts[0] - t)
    h = min(h, max_step)
    k = [None] * 7
    cut_i = 0
    while cut_i < len(cuts):
        target = cuts[cut_i]
        span = target - t
        hit = h >= span * (1 - 1e-12)
        step = span if hit else h
        if step <= 1e-14 * max(1.0, abs(t)):
            raise IntegrationError("step size underflow", t)
        k[0] = f
        for s in range(1, 7):
            dy = sum(a * ks for a, ks in zip(_A[s], k[:s]) if a != 0.0)
            k[s] = feval(t + _C[s] * step, y + step * dy)
        y_new = y + step * sum(b * ks for b, ks in zip(_B, k) if b != 0.0)
        err = step * sum(e * ks for e, ks in zip(_E, k) if e != 0.0)
        norm = _error_norm(err, y, y_new, rel_tol, abs_tol)
        if not np.isfinite(norm):
            raise IntegrationError("non-finite error estimate", t)
        if norm > 1.0:
            h = step * max(MIN_FACTOR, SAFETY * norm ** (-1 / ORDER))
            continue
        t = target if hit else t + step
        y = _symmetrize(y_new)
        f = k[6]
        if on_step is not None:
            on_step(t, y)
        factor = MAX_FACTOR if norm == 0 else min(MAX_FACTOR, SAFETY * norm ** (-1 / ORDER))
        if hit and step < h:
            # a stop forced a short step; do not let it shrink the step size
            h = min(max_step, max(h, step * factor))
        else:
            h = min(max_step, step * factor)
        if hit:
            while j < stops.size and stops[j] <= t:
                callback(j, t, y)
                j += 1
            if t == hi:
                seg += 1
                lo, hi = bounds[seg], bounds[seg + 1]
                f = feval(t, y)
            cut_i += 1
    return h
