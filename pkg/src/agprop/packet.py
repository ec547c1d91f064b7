"""Coherent states, anisotropic Gaussian packets and grid functions."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import erfc

from .errors import DomainCoverageError, GridMismatchError
from .flow import CharacteristicState, Trajectory, anisotropy, amplitude
from .model import PhasePoint

__all__ = [
    "Grid",
    "GridFunction",
    "AnisotropicPacket",
    "Observables",
    "coherent_state",
    "packet_eval",
    "packet_values_batch",
    "observables",
    "overlap",
    "auto_box",
    "outside_mass",
    "COVERAGE_THRESHOLD",
]

COVERAGE_THRESHOLD = 1e-8


@dataclass(frozen=True)
class Grid:
    """Uniform periodic-convention grid on the box ``[lo, hi)`` per axis.

    Points are ``lo + k (hi - lo) / n`` for ``k = 0 .. n-1``; the same layout
    serves the trapezoidal rule (for functions negligible at the boundary)
    and the FFT.
    """

    lo: tuple
    hi: tuple
    n: int

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have equal length")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("empty box")
        n = int(self.n)
        if n < 2 or n & (n - 1):
            raise ValueError("points per axis must be a power of two")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / self.n

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def axes(self) -> list:
        return [a + self.spacing[i] * np.arange(self.n) for i, a in enumerate(self.lo)]

    @property
    def points(self) -> np.ndarray:
        """Coordinates, shape ``shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def wavenumbers(self) -> list:
        return [2 * np.pi * np.fft.fftfreq(self.n, d=h) for h in self.spacing]


@dataclass
class GridFunction:
    """Complex samples of a function on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))

    def normalized(self) -> "GridFunction":
        return GridFunction(self.grid, self.values / self.norm())

    def __add__(self, other):
        _same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def to_csv(self, path) -> None:
        """d = 1: columns x, Re, Im, |psi|^2.  d >= 2: flat row-major values plus a JSON sidecar."""
        fmt = lambda v: format(float(v), ".17g")  # noqa: E731
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.grid.dim == 1:
                w.writerow(["x", "re", "im", "abs2"])
                for x, v in zip(self.grid.axes[0], self.values):
                    w.writerow([fmt(x), fmt(v.real), fmt(v.imag), fmt(abs(v) ** 2)])
            else:
                w.writerow(["re", "im"])
                for v in self.values.ravel(order="C"):
                    w.writerow([fmt(v.real), fmt(v.imag)])
        if self.grid.dim > 1:
            side = {"lo": list(self.grid.lo), "hi": list(self.grid.hi),
                    "shape": list(self.grid.shape), "order": "row-major"}
            with open(str(path) + ".json", "w") as fh:
                json.dump(side, fh, indent=2)


def _same_grid(f, g):
    if f.grid != g.grid:
        raise GridMismatchError("grid functions live on different grids")


def auto_box(center, cov, n_sigma: float) -> tuple:
    """Box reaching ``n_sigma`` standard deviations of ``cov`` from ``center``."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    sig = np.sqrt(np.diag(np.atleast_2d(cov)))
    return tuple(center - n_sigma * sig), tuple(center + n_sigma * sig)


def _as_points(x):
    if isinstance(x, Grid):
        return x.points
    x = np.asarray(x, dtype=float)
    return x


def coherent_state(x, q, p, hbar: float):
    """The coherent state G_(q,p)(x; hbar).

    ``x`` is a :class:`Grid` (returns a :class:`GridFunction`) or an array of
    points with trailing axis of length d.  For d = 1 a plain 1-d array of
    positions is also accepted.
    """
    if not hbar > 0:
        raise ValueError("hbar must be positive")
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    d = q.shape[0]
    pts = _as_points(x)
    if d == 1 and not isinstance(x, Grid) and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    u = pts - q
    phase = 0.5 * p @ q + u @ p + 0.5j * np.sum(u * u, axis=-1)
    vals = (np.pi * hbar) ** (-d / 4) * np.exp(1j * phase / hbar)
    return GridFunction(x, vals) if isinstance(x, Grid) else vals


@dataclass(frozen=True)
class AnisotropicPacket:
    """Parameters of G^Z: initial and current centers, Z, a, action S, hbar."""

    hbar: float
    initial: PhasePoint
    center: PhasePoint
    Z: np.ndarray
    a: complex
    S: float = 0.0
    check_tol: float = 1e-8

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, dtype=complex))
        object.__setattr__(self, "Z", Z)
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        scale = max(1.0, float(np.max(np.abs(Z))))
        if np.max(np.abs(Z - Z.T)) > self.check_tol * scale:
            raise ValueError("Z is not symmetric")
        ev = np.linalg.eigvalsh(0.5 * (Z.imag + Z.imag.T))
        if ev.min() <= 0:
            raise ValueError("Im Z is not positive definite")
        mod = abs(self.a) ** 4 / np.prod(ev)
        if abs(mod - 1.0) > self.check_tol:
            raise ValueError(f"|a|^4 / det Im Z = {mod!r} differs from 1")

    @property
    def dim(self) -> int:
        return self.center.dim

    @classmethod
    def from_state(cls, state: CharacteristicState, initial: PhasePoint, hbar: float,
                   **kw) -> "AnisotropicPacket":
        return cls(hbar, initial, PhasePoint(state.q, state.p), anisotropy(state),
                   amplitude(state), state.S, **kw)

    @classmethod
    def from_trajectory(cls, traj: Trajectory, index: int, hbar: float, **kw):
        return cls.from_state(traj[index], traj.initial, hbar, **kw)

    @classmethod
    def coherent(cls, x0: PhasePoint, hbar: float) -> "AnisotropicPacket":
        d = x0.dim
        return cls(hbar, x0, x0, 1j * np.eye(d), 1.0 + 0j, 0.0)

    def position_covariance(self) -> np.ndarray:
        return 0.5 * self.hbar * np.linalg.inv(self.Z.imag)


def outside_mass(grid: Grid, mean, cov) -> float:
    """Upper bound on the Gaussian probability mass outside the grid box."""
    mean = np.atleast_1d(mean)
    sig = np.sqrt(np.diag(np.atleast_2d(cov)))
    total = 0.0
    for j in range(grid.dim):
        lo = (grid.lo[j] - mean[j]) / (np.sqrt(2) * sig[j])
        hi = (grid.hi[j] - mean[j]) / (np.sqrt(2) * sig[j])
        total += 0.5 * (erfc(-lo) + erfc(hi))
    return float(total)


def packet_values_batch(x, q0, p0, q, p, Z, a, S, hbar: float):
    """G^Z for a batch of packets at points ``x``.

    Packet parameters carry a leading batch axis N (``q`` is ``(N, d)``, ``Z``
    is ``(N, d, d)``); ``x`` is ``(M, d)``.  Returns an ``(N, M)`` array.
    """
    d = x.shape[-1]
    u = x[None, :, :] - q[:, None, :]
    quad = np.einsum("nmi,nij,nmj->nm", u, Z, u)
    static = 0.5 * np.sum(p0 * q0, axis=-1)
    phase = (static + S)[:, None] + np.einsum("nmi,ni->nm", u, p) + 0.5 * quad
    return (np.pi * hbar) ** (-d / 4) * a[:, None] * np.exp(1j * phase / hbar)


def packet_eval(x, packet: AnisotropicPacket, coverage_tol: float = COVERAGE_THRESHOLD):
    """Evaluate G^Z on a :class:`Grid` or at points ``(..., d)``.

    On grids, a packet whose mass outside the box exceeds ``coverage_tol``
    raises :class:`DomainCoverageError`.
    """
    if isinstance(x, Grid):
        m = outside_mass(x, packet.center.q, packet.position_covariance())
        if m > coverage_tol:
            raise DomainCoverageError(f"packet mass {m:.2e} outside the grid box")
    pts = _as_points(x)
    d = packet.dim
    if d == 1 and not isinstance(x, Grid) and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    shape = pts.shape[:-1]
    vals = packet_values_batch(
        pts.reshape(-1, d), packet.initial.q[None], packet.initial.p[None],
        packet.center.q[None], packet.center.p[None], packet.Z[None],
        np.array([packet.a]), np.array([packet.S]), packet.hbar)[0].reshape(shape)
    return GridFunction(x, vals) if isinstance(x, Grid) else vals


class Observables(NamedTuple):
    mean_q: np.ndarray
    mean_p: np.ndarray
    cov_q: np.ndarray
    cov_p: np.ndarray

    def uncertainty_products(self) -> np.ndarray:
        """Delta q_j Delta p_j for each component."""
        return np.sqrt(np.diag(self.cov_q) * np.diag(self.cov_p))


def observables(packet: AnisotropicPacket) -> Observables:
    """Closed-form means and covariances of |G^Z|^2 and its momentum density.

    Position covariance (hbar/2)(Im Z)^{-1}; momentum covariance
    (hbar/2) Z (Im Z)^{-1} conj(Z), which equals (hbar/2) B B^* for the
    variational matrices that produced Z.
    """
    Z = packet.Z
    inv = np.linalg.inv(Z.imag)
    cov_q = 0.5 * packet.hbar * inv
    cov_p = 0.5 * packet.hbar * (Z @ inv @ Z.conj()).real
    return Observables(packet.center.q.copy(), packet.center.p.copy(), cov_q, cov_p)


def overlap(f: GridFunction, g: GridFunction) -> complex:
    """<f, g>, conjugate-linear in ``f``."""
    _same_grid(f, g)
    return complex(np.sum(np.conj(f.values) * g.values) * f.grid.cell_volume)
