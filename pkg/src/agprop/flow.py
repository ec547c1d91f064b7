"""Characteristic system: classical orbit, action and variational matrices.

The integrated state is ``(q_t, p_t, S, A, B, log det A)`` with the linear
variational system

    dA/dt = H_pq A + H_pp B,     dB/dt = -H_qq A - H_qp B,

started from A = I, B = iI.  The anisotropy matrix Z = B A^{-1} and the
amplitude a = exp(-log det A / 2) are formed on demand.  ``log det A`` is
carried as an ODE component with rate tr(dA/dt A^{-1}), so the square-root
branch of the amplitude follows by continuity from a(t0) = 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _ode
from .errors import CausticProximityError
from .model import HamiltonianModel, PhasePoint, evaluate

__all__ = [
    "CharacteristicState",
    "CharacteristicRates",
    "Trajectory",
    "BatchFlow",
    "characteristic_rhs",
    "integrate_characteristics",
    "integrate_batch",
    "anisotropy",
    "amplitude",
    "monodromy",
    "DEFAULT_TOLERANCE",
    "DEFAULT_CONDITION_CAP",
]

DEFAULT_TOLERANCE = 1e-10
DEFAULT_CONDITION_CAP = 1e8
# largest change of arg det A allowed in one accepted step
_MAX_PHASE_STEP = np.pi / 2


@dataclass(frozen=True)
class CharacteristicState:
    """One sample of the characteristic flow at time ``t``."""

    t: float
    q: np.ndarray
    p: np.ndarray
    S: float
    A: np.ndarray
    B: np.ndarray
    log_det_A: complex

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    @classmethod
    def initial(cls, x0: PhasePoint, t0: float = 0.0) -> "CharacteristicState":
        d = x0.dim
        return cls(float(t0), x0.q.copy(), x0.p.copy(), 0.0,
                   np.eye(d, dtype=complex), 1j * np.eye(d), 0j)

    @property
    def Z(self) -> np.ndarray:
        return anisotropy(self)

    @property
    def a(self) -> complex:
        return amplitude(self)


class CharacteristicRates(NamedTuple):
    q: np.ndarray
    p: np.ndarray
    S: float
    A: np.ndarray
    B: np.ndarray
    log_det_A: complex


# -- packing ---------------------------------------------------------------

def _layout(d):
    n = d * d
    return {
        "q": slice(0, d),
        "p": slice(d, 2 * d),
        "S": 2 * d,
        "A": slice(2 * d + 1, 2 * d + 1 + n),
        "B": slice(2 * d + 1 + n, 2 * d + 1 + 2 * n),
        "L": 2 * d + 1 + 2 * n,
        "size": 2 * d + 2 + 2 * n,
    }


def _pack(q, p, S, A, B, L):
    q = np.asarray(q)
    d = q.shape[-1]
    lay = _layout(d)
    batch = q.shape[:-1]
    Y = np.empty(batch + (lay["size"],), dtype=complex)
    Y[..., lay["q"]] = q
    Y[..., lay["p"]] = p
    Y[..., lay["S"]] = S
    Y[..., lay["A"]] = np.reshape(A, batch + (d * d,))
    Y[..., lay["B"]] = np.reshape(B, batch + (d * d,))
    Y[..., lay["L"]] = L
    return Y


def _unpack(Y, d):
    lay = _layout(d)
    batch = Y.shape[:-1]
    return (
        Y[..., lay["q"]].real,
        Y[..., lay["p"]].real,
        Y[..., lay["S"]].real,
        Y[..., lay["A"]].reshape(batch + (d, d)),
        Y[..., lay["B"]].reshape(batch + (d, d)),
        Y[..., lay["L"]],
    )


def _condition(A):
    s = np.linalg.svd(A, compute_uv=False)
    with np.errstate(divide="ignore"):
        return s[..., 0] / s[..., -1]


def _rates(model, t, q, p, A, B, cond_cap):
    """Vectorized right-hand side. Returns the rates and cond(A)."""
    cond = _condition(A)
    if np.any(~(cond <= cond_cap)):
        worst = float(np.nanmax(np.where(np.isfinite(cond), cond, np.inf)))
        raise CausticProximityError(
            f"cond(A) = {worst:.3e} exceeds cap {cond_cap:.1e} at t={t:.6g}")
    H, (Hq, Hp), hs = evaluate(model, q, p, t)
    dq = Hp
    dp = -Hq
    dS = np.sum(p * Hp, axis=-1) - H
    dA = hs.pq @ A + hs.pp @ B
    dB = -(hs.qq @ A) - hs.qp @ B
    dL = np.trace(np.linalg.solve(A, dA), axis1=-2, axis2=-1)
    return dq, dp, dS, dA, dB, dL


def characteristic_rhs(model: HamiltonianModel, state: CharacteristicState,
                       cond_cap: float = DEFAULT_CONDITION_CAP) -> CharacteristicRates:
    """Time derivative of every field of ``state``."""
    dq, dp, dS, dA, dB, dL = _rates(model, state.t, state.q, state.p, state.A, state.B, cond_cap)
    return CharacteristicRates(dq, dp, float(dS), dA, dB, complex(dL))


# -- derived quantities ----------------------------------------------------

def anisotropy(state: CharacteristicState, cond_cap: float = DEFAULT_CONDITION_CAP) -> np.ndarray:
    """Z = B A^{-1}."""
    A = np.asarray(state.A)
    if _condition(A) > cond_cap:
        raise CausticProximityError("A is numerically singular")
    return np.linalg.solve(A.T, np.asarray(state.B).T).T


def amplitude(state: CharacteristicState) -> complex:
    """a = (det A)^{-1/2} on the branch reached continuously from a(t0) = 1."""
    return complex(np.exp(-0.5 * state.log_det_A))


def monodromy(state: CharacteristicState) -> np.ndarray:
    """Real Jacobian d(q_t, p_t)/d(q, p) recovered from A and B."""
    A, B = np.asarray(state.A), np.asarray(state.B)
    return np.block([[A.real, A.imag], [B.real, B.imag]])


# -- integration -----------------------------------------------------------

@dataclass
class BatchFlow:
    """Characteristic flow of many initial points sampled at common times.

    Arrays have shape ``(n_times, n_points, ...)``.
    """

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    S: np.ndarray
    A: np.ndarray
    B: np.ndarray
    log_det_A: np.ndarray
    stats: _ode.OdeStats
    max_condition: float

    @property
    def Z(self) -> np.ndarray:
        return np.swapaxes(np.linalg.solve(np.swapaxes(self.A, -1, -2),
                                           np.swapaxes(self.B, -1, -2)), -1, -2)

    @property
    def a(self) -> np.ndarray:
        return np.exp(-0.5 * self.log_det_A)

    def state(self, i_time: int, i_point: int) -> CharacteristicState:
        return CharacteristicState(
            float(self.times[i_time]), self.q[i_time, i_point].copy(), self.p[i_time, i_point].copy(),
            float(self.S[i_time, i_point]), self.A[i_time, i_point].copy(),
            self.B[i_time, i_point].copy(), complex(self.log_det_A[i_time, i_point]))


def _system(model, d, cond_cap):
    def fun(t, Y):
        q, p, S, A, B, L = _unpack(Y, d)
        dq, dp, dS, dA, dB, dL = _rates(model, t, q, p, A, B, cond_cap)
        return _pack(dq, dp, dS, dA, dB, dL)

    lay = _layout(d)

    def accept(y_old, y_new):
        dphase = np.abs(y_new[..., lay["L"]].imag - y_old[..., lay["L"]].imag)
        return bool(np.all(dphase < _MAX_PHASE_STEP))

    return fun, accept


def _validate_times(t0, times, tolerance):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0:
        raise ValueError("no output times requested")
    if np.any(np.diff(times) <= 0):
        raise ValueError("output times must be strictly increasing")
    if times[0] < t0:
        raise ValueError("output times precede t0")
    if not (1e-13 <= tolerance <= 1e-6):
        raise ValueError("tolerance must lie in [1e-13, 1e-6]")
    return times


def integrate_batch(model: HamiltonianModel, q0, p0, t0: float, times,
                    tolerance: float = DEFAULT_TOLERANCE,
                    cond_cap: float = DEFAULT_CONDITION_CAP) -> BatchFlow:
    """Integrate the characteristic system for a batch of initial points.

    ``q0`` and ``p0`` have shape ``(n_points, d)``.
    """
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    n, d = q0.shape
    if d != model.dim or p0.shape != q0.shape:
        raise ValueError(f"initial points must have shape (n, {model.dim})")
    times = _validate_times(t0, times, tolerance)
    eye = np.broadcast_to(np.eye(d, dtype=complex), (n, d, d))
    Y0 = _pack(q0, p0, np.zeros(n), eye, 1j * eye, np.zeros(n))
    fun, accept = _system(model, d, cond_cap)
    Yout, stats, _ = _ode.integrate(fun, t0, Y0, times, rtol=tolerance, accept=accept)
    q, p, S, A, B, L = _unpack(Yout, d)
    cond = _condition(A)
    return BatchFlow(times, q.copy(), p.copy(), S.copy(), A.copy(), B.copy(), L.copy(),
                     stats, float(np.max(cond)))


@dataclass
class Trajectory:
    """Characteristic states of one orbit at strictly increasing times."""

    initial: PhasePoint
    t0: float
    states: list
    accepted_steps: int
    rejected_steps: int
    max_condition: float
    _dense: tuple | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i) -> CharacteristicState:
        return self.states[i]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> CharacteristicState:
        return self.states[-1]

    @property
    def has_dense_output(self) -> bool:
        return self._dense is not None

    @property
    def step_times(self) -> np.ndarray:
        """Times of the accepted integrator steps (needs dense output)."""
        if self._dense is None:
            raise ValueError("trajectory was integrated without dense output")
        return self._dense[0].copy()

    def dense(self, tau) -> list:
        """States at arbitrary times inside the span, by cubic Hermite interpolation."""
        if self._dense is None:
            raise ValueError("trajectory was integrated without dense output")
        tn, yn, fn = self._dense
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if np.any(tau < tn[0] - 1e-12) or np.any(tau > tn[-1] + 1e-12):
            raise ValueError("dense output requested outside the integrated span")
        Y = _ode.hermite(tn, yn, fn, tau)
        d = self.initial.dim
        q, p, S, A, B, L = _unpack(Y, d)
        return [CharacteristicState(float(tau[i]), q[i].copy(), p[i].copy(), float(S[i]),
                                    A[i].copy(), B[i].copy(), complex(L[i]))
                for i in range(tau.size)]

    def dense_jacobian_qp(self, tau) -> np.ndarray:
        """dq_t/dp = Im A at times ``tau`` from the dense interpolant, shape (n, d, d)."""
        if self._dense is None:
            raise ValueError("trajectory was integrated without dense output")
        tn, yn, fn = self._dense
        Y = _ode.hermite(tn, yn, fn, tau)
        return _unpack(Y, self.initial.dim)[3].imag

    def to_csv(self, path) -> None:
        """Write one row per output time: t, q, p, S, Re/Im A, Re/Im B, Re/Im log det A."""
        d = self.initial.dim
        idx = [f"{i}{j}" for i in range(d) for j in range(d)]
        header = (["t"] + [f"q{i}" for i in range(d)] + [f"p{i}" for i in range(d)] + ["S"]
                  + [f"ReA{k}" for k in idx] + [f"ImA{k}" for k in idx]
                  + [f"ReB{k}" for k in idx] + [f"ImB{k}" for k in idx]
                  + ["ReLogDetA", "ImLogDetA"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for s in self.states:
                A = s.A.ravel()
                B = s.B.ravel()
                row = ([s.t, *s.q, *s.p, s.S, *A.real, *A.imag, *B.real, *B.imag,
                        s.log_det_A.real, s.log_det_A.imag])
                w.writerow([format(float(v), ".17g") for v in row])


def integrate_characteristics(model: HamiltonianModel, x0: PhasePoint, t0: float, T: float,
                              output_times=None, tolerance: float = DEFAULT_TOLERANCE,
                              cond_cap: float = DEFAULT_CONDITION_CAP,
                              dense: bool = False) -> Trajectory:
    """Integrate the characteristic system of one orbit over ``[t0, t0 + T]``.

    ``output_times`` defaults to ``[t0, t0 + T]``; ``t0`` is always included as
    the first state.  With ``dense=True`` every accepted step is recorded so
    that :meth:`Trajectory.dense` can interpolate between outputs.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if x0.dim != model.dim:
        raise ValueError("initial point dimension does not match the model")
    if output_times is None:
        output_times = [t0 + T]
    times = np.asarray(output_times, dtype=float)
    if np.any(times > t0 + T * (1 + 1e-14)):
        raise ValueError("output time beyond t0 + T")
    times = np.unique(np.concatenate([[t0], times]))
    times = _validate_times(t0, times, tolerance)
    d = x0.dim
    eye = np.eye(d, dtype=complex)[None]
    Y0 = _pack(x0.q[None], x0.p[None], np.zeros(1), eye, 1j * eye, np.zeros(1))
    fun, accept = _system(model, d, cond_cap)
    Yout, stats, nodes = _ode.integrate(fun, t0, Y0, times, rtol=tolerance,
                                        accept=accept, dense=dense)
    q, p, S, A, B, L = _unpack(Yout[:, 0], d)
    states = [CharacteristicState(float(times[i]), q[i].copy(), p[i].copy(), float(S[i]),
                                  A[i].copy(), B[i].copy(), complex(L[i]))
              for i in range(times.size)]
    dense_data = None
    if dense:
        tn, yn, fn = nodes.freeze()
        dense_data = (tn, yn[:, 0], fn[:, 0])
    return Trajectory(x0, float(t0), states, stats.accepted, stats.rejected,
                      float(np.max(_condition(A))), dense_data)
