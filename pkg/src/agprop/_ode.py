"""Batched Dormand-Prince 5(4) integrator with cubic Hermite dense output.

All trajectories of a batch share one step size; the local error norm is the
worst per-trajectory RMS, so every member meets the tolerance.  Steps are
clipped to land exactly on requested output times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StepSizeUnderflow

# Dormand & Prince (1980), RK5(4)7M
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
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B5 - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


@dataclass
class OdeStats:
    accepted: int = 0
    rejected: int = 0
    nfev: int = 0


@dataclass
class DenseNodes:
    """Accepted step endpoints with derivatives, for cubic Hermite interpolation."""

    t: list = field(default_factory=list)
    y: list = field(default_factory=list)
    f: list = field(default_factory=list)

    def freeze(self):
        return np.asarray(self.t), np.asarray(self.y), np.asarray(self.f)


def hermite(t_nodes, y_nodes, f_nodes, tau):
    """Cubic Hermite interpolant of recorded nodes at times ``tau``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    k = np.clip(np.searchsorted(t_nodes, tau, side="right") - 1, 0, len(t_nodes) - 2)
    t0, t1 = t_nodes[k], t_nodes[k + 1]
    h = t1 - t0
    s = (tau - t0) / h
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    ex = (slice(None),) + (None,) * (y_nodes.ndim - 1)
    return (h00[ex] * y_nodes[k] + (h10 * h)[ex] * f_nodes[k]
            + h01[ex] * y_nodes[k + 1] + (h11 * h)[ex] * f_nodes[k + 1])


def _error_norm(err, y_old, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    r = np.abs(err) / scale
    per_traj = np.sqrt(np.mean(r * r, axis=tuple(range(1, r.ndim))))
    return float(np.max(per_traj))


def _initial_step(fun, t0, y0, f0, rtol, atol, direction_span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((np.abs(y0) / scale) ** 2))
    d1 = np.sqrt(np.mean((np.abs(f0) / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = fun(t0 + h0, y1)
    d2 = np.sqrt(np.mean((np.abs(f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def integrate(fun, t0, y0, t_out, rtol=1e-10, atol=None, *, max_step=np.inf,
              accept=None, dense=False, first_step=None):
    """Integrate ``y' = fun(t, y)`` from ``t0`` and return states at ``t_out``.

    Parameters
    ----------
    fun : callable
        ``fun(t, y)`` returning an array shaped like ``y``.  ``y`` has a leading
        batch axis.
    t_out : array_like
        Non-decreasing output times, all ``>= t0``.
    accept : callable, optional
        ``accept(y_old, y_new)`` returning False to reject an otherwise
        acceptable step (the step is then halved).
    dense : bool
        Record every accepted step for :func:`hermite` interpolation.

    Returns
    -------
    y_out : ndarray, shape ``(len(t_out),) + y0.shape``
    stats : OdeStats
    nodes : DenseNodes or None
    """
    atol = rtol if atol is None else atol
    t_out = np.asarray(t_out, dtype=float)
    if t_out.ndim != 1 or np.any(np.diff(t_out) < 0) or (t_out.size and t_out[0] < t0):
        raise ValueError("output times must be sorted and not before t0")
    y = np.array(y0, dtype=complex)
    out = np.empty((t_out.size,) + y.shape, dtype=complex)
    stats = OdeStats()
    nodes = DenseNodes() if dense else None

    t = float(t0)
    f = fun(t, y)
    stats.nfev += 1
    if dense:
        nodes.t.append(t)
        nodes.y.append(y.copy())
        nodes.f.append(f.copy())

    k_out = 0
    while k_out < t_out.size and t_out[k_out] <= t:
        out[k_out] = y
        k_out += 1
    if k_out == t_out.size:
        return out, stats, nodes

    t_end = float(t_out[-1])
    h = first_step or _initial_step(fun, t, y, f, rtol, atol, t_end - t)
    stats.nfev += 1
    h = min(h, max_step)
    K = np.empty((7,) + y.shape, dtype=complex)

    while k_out < t_out.size:
        target = float(t_out[k_out])
        min_step = 1e-14 * max(1.0, abs(t))
        # an output closer than the minimum step is reached in one short step
        short = target - t <= min_step
        if h < min_step and not short:
            raise StepSizeUnderflow(f"step size {h:.3e} underflow at t={t:.6g}")
        landing = short or t + h >= target - 1e-14 * max(1.0, abs(target))
        h_try = target - t if landing else h

        K[0] = f
        for s in range(1, 7):
            dy = np.zeros_like(y)
            for j, a in enumerate(_A[s]):
                if a != 0.0:
                    dy += a * K[j]
            K[s] = fun(t + _C[s] * h_try, y + h_try * dy)
        stats.nfev += 6
        y_new = y + h_try * np.tensordot(_B5, K, axes=1)
        err = h_try * np.tensordot(_E, K, axes=1)
        en = _error_norm(err, y, y_new, rtol, atol)

        if en <= 1.0 and (accept is None or accept(y, y_new)):
            t = target if landing else t + h_try
            y = y_new
            f = K[6]
            stats.accepted += 1
            if dense:
                nodes.t.append(t)
                nodes.y.append(y.copy())
                nodes.f.append(f.copy())
            factor = _MAX_FACTOR if en == 0 else min(_MAX_FACTOR, _SAFETY * en ** -0.2)
            if not landing:
                h = min(h_try * factor, max_step)
            else:
                h = min(max(h, h_try * factor), max_step)
            while k_out < t_out.size and t_out[k_out] <= t:
                out[k_out] = y
                k_out += 1
        else:
            stats.rejected += 1
            if en > 1.0:
                h = h_try * max(_MIN_FACTOR, _SAFETY * en ** -0.2)
            else:
                h = 0.5 * h_try
    return out, stats, nodes
