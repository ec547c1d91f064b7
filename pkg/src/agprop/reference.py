"""Independent numerical and closed-form references.

The split-step solver below uses nothing from the flow or packet modules
except the :class:`Grid` / :class:`GridFunction` containers, so it can serve
as an oracle for them.  The closed-form propagators are written out from
their textbook expressions for the same reason.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainCoverageError, GridMismatchError, StabilityGuardError
from .flow import CharacteristicState, anisotropy
from .model import HamiltonianModel, PhasePoint, evaluate
from .packet import AnisotropicPacket, Grid, GridFunction, packet_eval

__all__ = [
    "SplitStepConfig",
    "split_step_solve",
    "residual_norm",
    "l2_distance",
    "free_gaussian_exact",
    "free_kernel",
    "mehler_kernel",
]


@dataclass
class SplitStepConfig:
    """Grid, step and Hamiltonian data for :func:`split_step_solve`.

    ``potential(x, t)`` takes points of shape ``(..., d)``.  Set
    ``time_dependent`` for potentials that change in time; otherwise the
    potential is evaluated once.
    """

    grid: Grid
    dt: float
    hbar: float
    mass: float
    potential: Callable
    time_dependent: bool = False
    boundary_tol: float = 1e-10
    # width of the boundary strips, as a fraction of the box, inspected for wrap-around
    boundary_fraction: float = 1 / 32

    @classmethod
    def from_model(cls, model: HamiltonianModel, grid: Grid, dt: float, hbar: float, **kw):
        mech = model.mechanical_form()
        if mech is None:
            raise ValueError(f"{model!r} has no mechanical form |p|^2/2m + V")
        return cls(grid, dt, hbar, mech.mass, mech.potential,
                   time_dependent=getattr(model, "time_dependent", False), **kw)

    def max_kinetic_phase(self) -> float:
        kmax2 = sum((np.pi / h) ** 2 for h in self.grid.spacing)
        return self.dt * self.hbar * kmax2 / (2 * self.mass)


def _boundary_mass(psi: np.ndarray, grid: Grid, fraction: float) -> float:
    m = max(1, int(round(fraction * grid.n)))
    rho = np.abs(psi) ** 2
    total = 0.0
    for ax in range(grid.dim):
        edge = np.concatenate([np.take(rho, range(m), axis=ax),
                               np.take(rho, range(grid.n - m, grid.n), axis=ax)], axis=ax)
        total += edge.sum()
    return float(total * grid.cell_volume)


def split_step_solve(config: SplitStepConfig, psi0: GridFunction, t0: float, t,
                     ) -> GridFunction | list:
    """Strang-split Fourier evolution of ``psi0`` from ``t0``.

    ``t`` may be a single time (returns one :class:`GridFunction`) or an
    increasing sequence (returns a list).  Each interval between requested
    times is divided into equal steps no longer than ``config.dt``.
    """
    if psi0.grid != config.grid:
        raise GridMismatchError("initial state is not on the solver grid")
    if config.max_kinetic_phase() >= np.pi:
        raise StabilityGuardError(
            f"dt * max kinetic phase = {config.max_kinetic_phase():.3f} >= pi; reduce dt or refine less")
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.diff(times) < 0) or times[0] < t0:
        raise ValueError("times must be increasing and not before t0")

    grid = config.grid
    x = grid.points
    k = np.meshgrid(*grid.wavenumbers(), indexing="ij")
    k2 = sum(kk * kk for kk in k)
    hb, m = config.hbar, config.mass

    psi = psi0.values.copy()
    results = []
    tc = float(t0)
    static_v = None if config.time_dependent else np.asarray(config.potential(x, t0), dtype=float)
    for target in times:
        span = target - tc
        nsteps = int(math.ceil(span / config.dt - 1e-9)) if span > 0 else 0
        if nsteps:
            h = span / nsteps
            kinetic = np.exp(-1j * h * hb * k2 / (2 * m))
            if static_v is not None:
                half = np.exp(-0.5j * h * static_v / hb)
                full = half * half
                psi *= half
                for s in range(nsteps):
                    psi = np.fft.ifftn(kinetic * np.fft.fftn(psi))
                    psi *= full if s < nsteps - 1 else half
            else:
                for s in range(nsteps):
                    v = np.asarray(config.potential(x, tc + (s + 0.5) * h), dtype=float)
                    half = np.exp(-0.5j * h * v / hb)
                    psi = half * np.fft.ifftn(kinetic * np.fft.fftn(half * psi))
            tc = float(target)
        edge = _boundary_mass(psi, grid, config.boundary_fraction)
        if edge > config.boundary_tol:
            raise DomainCoverageError(f"mass {edge:.2e} reached the periodic boundary at t={tc:.6g}")
        results.append(GridFunction(grid, psi.copy()))
    return results[0] if np.ndim(t) == 0 else results


def l2_distance(f: GridFunction, g: GridFunction) -> float:
    """Trapezoidal L2 norm of f - g on their common grid."""
    if f.grid != g.grid:
        raise GridMismatchError("grid functions live on different grids")
    return float(np.sqrt(np.sum(np.abs(f.values - g.values) ** 2) * f.grid.cell_volume))


def residual_norm(model: HamiltonianModel, state: CharacteristicState, initial: PhasePoint,
                  hbar: float, grid: Grid, coverage_tol: float = 1e-8) -> float:
    """L2 norm of (i hbar d/dt - H^) G^Z on ``grid`` for a mechanical model.

    The time derivative of G^Z is taken analytically through the rates of
    the characteristic system at ``state``; the operator H^ is applied
    spectrally as -(hbar^2 / 2m) Laplacian + V.
    """
    mech = model.mechanical_form()
    if mech is None:
        raise ValueError(f"{model!r} has no mechanical form")
    if grid.dim != model.dim:
        raise ValueError("grid dimension does not match the model")
    Z = anisotropy(state)
    Z = 0.5 * (Z + Z.T)
    packet = AnisotropicPacket(hbar, initial, PhasePoint(state.q, state.p), Z,
                               complex(np.exp(-0.5 * state.log_det_A)), state.S)
    G = packet_eval(grid, packet, coverage_tol=coverage_tol).values

    H, (Hq, Hp), hs = evaluate(model, state.q, state.p, state.t)
    qdot, pdot = Hp, -Hq
    Sdot = float(state.p @ Hp - H)
    Zdot = -(Z @ hs.pp @ Z + Z @ hs.pq + hs.qp @ Z + hs.qq)
    log_a_dot = -0.5 * np.trace(hs.pp @ Z + hs.pq)

    u = grid.points - state.q
    Zu = u @ Z
    dphase = (Sdot + u @ pdot - state.p @ qdot - Zu @ qdot
              + 0.5 * np.einsum("...i,ij,...j->...", u, Zdot, u))
    dG = G * (log_a_dot + 1j * dphase / hbar)

    k = np.meshgrid(*grid.wavenumbers(), indexing="ij")
    k2 = sum(kk * kk for kk in k)
    kinetic = np.fft.ifftn(hbar**2 * k2 / (2 * mech.mass) * np.fft.fftn(G))
    HG = kinetic + mech.potential(grid.points, state.t) * G
    R = 1j * hbar * dG - HG
    return float(np.sqrt(np.sum(np.abs(R) ** 2) * grid.cell_volume))


# -- closed forms --------------------------------------------------------------

def free_gaussian_exact(x, t: float, q0, p0, hbar: float, m: float = 1.0):
    """Free evolution for time ``t`` of the coherent state G_(q0,p0).

    Written from the Fourier-space solution of the free Schroedinger
    equation for a modulated Gaussian, independently of the characteristic
    system.  ``x`` is a Grid or points ``(..., d)``.
    """
    q0 = np.atleast_1d(np.asarray(q0, float))
    p0 = np.atleast_1d(np.asarray(p0, float))
    d = q0.size
    pts = x.points if isinstance(x, Grid) else np.asarray(x, float)
    if d == 1 and not isinstance(x, Grid) and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    tau = t / m
    u = pts - q0
    w = 1 + 1j * tau
    expo = (-np.sum((u - p0 * tau) ** 2, axis=-1) / (2 * hbar * w)
            + 1j * (u @ p0) / hbar - 1j * (p0 @ p0) * tau / (2 * hbar)
            + 0.5j * (p0 @ q0) / hbar)
    vals = (np.pi * hbar) ** (-d / 4) * w ** (-d / 2) * np.exp(expo)
    return GridFunction(x, vals) if isinstance(x, Grid) else vals


def free_kernel(x, y, t: float, hbar: float, m: float = 1.0):
    """(m / 2 pi i hbar t)^{d/2} exp(i m |x - y|^2 / 2 hbar t), principal branch."""
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    d = x.size
    pref = np.exp(-0.25j * np.pi * d) * (m / (2 * np.pi * hbar * t)) ** (d / 2)
    return complex(pref * np.exp(1j * m * np.sum((x - y) ** 2) / (2 * hbar * t)))


def mehler_kernel(x, y, t: float, hbar: float, omega: float = 1.0, m: float = 1.0):
    """Isotropic harmonic-oscillator propagator kernel, valid away from caustics.

    Uses |sin wt| in the prefactor together with the phase exp(-i pi d n / 2),
    n the number of half periods completed, which is the continuation of the
    kernel through the focal times.
    """
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    d = x.size
    wt = omega * t
    s, c = np.sin(wt), np.cos(wt)
    n_half = math.floor(wt / np.pi)
    pref = (m * omega / (2 * np.pi * hbar * abs(s))) ** (d / 2) * np.exp(-0.25j * np.pi * d)
    maslov = np.exp(-0.5j * np.pi * d * n_half)
    phase = m * omega * (np.sum(x * x + y * y) * c - 2 * np.sum(x * y)) / (2 * hbar * s)
    return complex(pref * maslov * np.exp(1j * phase))
