"""Anisotropic Gaussian propagator as a cut-off phase-space quadrature.

The operator

    U^Z(t0, t) psi = (2 pi hbar)^{-d} \\int chi(q, p) <G_(q,p), psi> G^Z_(q,p)(t) dq dp

is discretized on a uniform lattice of spacing ``c * sqrt(hbar)`` in every
phase-space direction, truncated by a smooth radial cutoff ``chi``.  Each
lattice node carries one characteristic orbit; orbits are integrated in
batches on first use and cached per output time.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, DomainCoverageError
from .flow import DEFAULT_CONDITION_CAP, DEFAULT_TOLERANCE, integrate_batch
from .model import HamiltonianModel
from .packet import Grid, GridFunction, outside_mass, packet_values_batch

__all__ = [
    "cutoff",
    "PhaseSpaceQuadrature",
    "build_quadrature",
    "FlowCache",
    "kernel_quadrature",
    "propagate_state",
    "write_kernel_csv",
]

logger = logging.getLogger(__name__)

DEFAULT_NODE_CAP = 10**7
_CHUNK = 1024
# nodes whose coherent state is below exp(-_PRUNE_EXPONENT) at every probe point are skipped
_PRUNE_EXPONENT = 42.0


def _glue(s):
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def cutoff(z, rho: float, width: float):
    """Smooth radial bump: 1 for |z| <= rho - width, 0 for |z| >= rho.

    ``z`` holds phase-space points along its last axis.  In between, the
    value is the C-infinity step g(s) / (g(s) + g(1 - s)) with
    g(s) = exp(-1/s) and s = (rho - |z|) / width.
    """
    if not 0 < width < rho:
        raise ValueError("cutoff needs 0 < width < rho")
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(z, axis=-1)
    s = np.atleast_1d((rho - r) / width)
    a, b = _glue(s), _glue(1.0 - s)
    val = np.where(s >= 1, 1.0, np.where(s <= 0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))
    return val.reshape(np.shape(r)) if np.ndim(r) else float(val[0])


@dataclass
class PhaseSpaceQuadrature:
    """Lattice nodes with nonzero cutoff, their cutoff values and the common weight."""

    hbar: float
    rho: float
    width: float
    spacing_factor: float
    dim: int
    spacing: float
    lattice_shape: tuple
    q: np.ndarray
    p: np.ndarray
    chi: np.ndarray
    weight: float

    @property
    def node_count(self) -> int:
        return self.q.shape[0]

    @property
    def lattice_count(self) -> int:
        return int(np.prod(self.lattice_shape))

    def cutoff_at(self, q, p) -> float:
        return cutoff(np.concatenate([np.atleast_1d(q), np.atleast_1d(p)]), self.rho, self.width)


def build_quadrature(rho: float, width: float, hbar: float, spacing_factor: float = 0.5,
                     dim: int = 1, node_cap: int = DEFAULT_NODE_CAP) -> PhaseSpaceQuadrature:
    """Lattice {k h : |k| <= rho / h}^{2d} with h = spacing_factor * sqrt(hbar)."""
    if not spacing_factor > 0:
        raise ValueError("spacing factor must be positive")
    if not hbar > 0:
        raise ValueError("hbar must be positive")
    if not 0 < width < rho:
        raise ValueError("quadrature needs 0 < width < rho")
    h = spacing_factor * np.sqrt(hbar)
    K = int(np.floor(rho / h + 1e-9))
    side = 2 * K + 1
    lattice_count = side ** (2 * dim)
    if lattice_count > node_cap:
        raise BudgetExceededError(f"{lattice_count} lattice nodes exceed the cap {node_cap}")
    axis = h * np.arange(-K, K + 1)
    mesh = np.stack(np.meshgrid(*([axis] * (2 * dim)), indexing="ij"), axis=-1).reshape(-1, 2 * dim)
    chi = cutoff(mesh, rho, width)
    keep = chi > 0
    mesh, chi = mesh[keep], chi[keep]
    weight = (2 * np.pi * hbar) ** (-dim) * h ** (2 * dim)
    return PhaseSpaceQuadrature(hbar, rho, width, spacing_factor, dim, h, (side,) * (2 * dim),
                                mesh[:, :dim].copy(), mesh[:, dim:].copy(), chi, weight)


@dataclass
class FlowCache:
    """Characteristic data of quadrature nodes at fixed output times.

    ``get(t, idx)`` integrates the nodes in ``idx`` that are not cached yet
    for time ``t`` (in one batch) and returns the cached arrays.
    """

    model: HamiltonianModel
    quadrature: PhaseSpaceQuadrature
    t0: float
    tolerance: float = DEFAULT_TOLERANCE
    cond_cap: float = DEFAULT_CONDITION_CAP
    _store: dict = field(default_factory=dict, repr=False)

    def _slot(self, t):
        key = float(t)
        if key not in self._store:
            n, d = self.quadrature.node_count, self.quadrature.dim
            self._store[key] = {
                "done": np.zeros(n, bool),
                "q": np.empty((n, d)), "p": np.empty((n, d)), "S": np.empty(n),
                "Z": np.empty((n, d, d), complex), "a": np.empty(n, complex),
            }
        return self._store[key]

    def get(self, t, idx):
        idx = np.asarray(idx, dtype=int)
        slot = self._slot(t)
        todo = idx[~slot["done"][idx]]
        if todo.size:
            quad = self.quadrature
            if float(t) == float(self.t0):
                d = quad.dim
                slot["q"][todo] = quad.q[todo]
                slot["p"][todo] = quad.p[todo]
                slot["S"][todo] = 0.0
                slot["Z"][todo] = 1j * np.eye(d)
                slot["a"][todo] = 1.0
            else:
                logger.debug("integrating %d nodes to t=%g", todo.size, t)
                bf = integrate_batch(self.model, quad.q[todo], quad.p[todo], self.t0, [t],
                                     self.tolerance, self.cond_cap)
                slot["q"][todo] = bf.q[0]
                slot["p"][todo] = bf.p[0]
                slot["S"][todo] = bf.S[0]
                slot["Z"][todo] = bf.Z[0]
                slot["a"][todo] = bf.a[0]
            slot["done"][todo] = True
        return {k: slot[k][idx] for k in ("q", "p", "S", "Z", "a")}

    @property
    def cached_times(self):
        return sorted(self._store)


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x.reshape(-1, d)


def _coherent_batch(x, q, p, hbar):
    """Coherent states of nodes (N, d) at points (M, d), shape (N, M)."""
    d = x.shape[-1]
    u = x[None, :, :] - q[:, None, :]
    phase = (0.5 * np.sum(p * q, axis=-1)[:, None] + np.einsum("nmi,ni->nm", u, p)
             + 0.5j * np.sum(u * u, axis=-1))
    return (np.pi * hbar) ** (-d / 4) * np.exp(1j * phase / hbar)


def _near(qnodes, pts, hbar):
    """Indices of nodes whose coherent state is non-negligible at some point."""
    keep = np.zeros(qnodes.shape[0], bool)
    for start in range(0, pts.shape[0], 256):
        blk = pts[start:start + 256]
        d2 = np.sum((qnodes[:, None, :] - blk[None, :, :]) ** 2, axis=-1)
        keep |= np.any(d2 / (2 * hbar) < _PRUNE_EXPONENT, axis=1)
    return np.nonzero(keep)[0]


def _chunks(idx, size=_CHUNK):
    return [idx[i:i + size] for i in range(0, idx.size, size)]


def _run(fn, items, jobs):
    if jobs and jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def kernel_quadrature(model: HamiltonianModel, x, y, t0: float, t: float,
                      quadrature: PhaseSpaceQuadrature, cache: FlowCache | None = None,
                      tolerance: float = DEFAULT_TOLERANCE, jobs: int = 1) -> np.ndarray:
    """Quadrature value of K^Z_chi(x, y, t0, t) for every pair of points.

    Returns an array of shape ``(len(x), len(y))``.  Only nodes whose
    coherent state is non-negligible at one of the ``y`` are integrated.
    """
    quad = quadrature
    d = quad.dim
    xs, ys = _points(x, d), _points(y, d)
    if cache is None:
        cache = FlowCache(model, quad, t0, tolerance)
    elif cache.quadrature is not quad or cache.t0 != t0:
        raise ValueError("cache belongs to a different quadrature or initial time")
    idx = _near(quad.q, ys, quad.hbar)
    if idx.size == 0:
        return np.zeros((xs.shape[0], ys.shape[0]), complex)
    data = cache.get(t, idx)
    pos = {n: i for i, n in enumerate(idx)}

    def part(chunk):
        sel = np.array([pos[n] for n in chunk])
        gz = packet_values_batch(xs, quad.q[chunk], quad.p[chunk], data["q"][sel], data["p"][sel],
                                 data["Z"][sel], data["a"][sel], data["S"][sel], quad.hbar)
        gy = _coherent_batch(ys, quad.q[chunk], quad.p[chunk], quad.hbar)
        return (gz.T * quad.chi[chunk]) @ gy.conj()

    parts = _run(part, _chunks(idx), jobs)
    return quad.weight * np.sum(np.stack(parts), axis=0)


def propagate_state(model: HamiltonianModel, psi0: GridFunction, t0: float, t: float,
                    quadrature: PhaseSpaceQuadrature, cache: FlowCache | None = None,
                    out_grid: Grid | None = None, tolerance: float = DEFAULT_TOLERANCE,
                    prune: float = 1e-14, coverage_tol: float = 1e-8,
                    jobs: int = 1) -> GridFunction:
    """Apply the discretized U^Z(t0, t) to a grid state.

    Frame coefficients below ``prune`` times the largest one are dropped.
    A bound on the mass of the retained packets outside ``out_grid``
    (default: the input grid) above ``coverage_tol`` raises
    :class:`DomainCoverageError`.
    """
    quad = quadrature
    grid = psi0.grid
    out_grid = grid if out_grid is None else out_grid
    if grid.dim != quad.dim:
        raise ValueError("state and quadrature dimensions differ")
    nrm = psi0.norm()
    if abs(nrm - 1) > 1e-6:
        logger.warning("initial state norm %.8f differs from 1", nrm)
    if cache is None:
        cache = FlowCache(model, quad, t0, tolerance)
    xin = grid.points.reshape(-1, quad.dim)
    vals = psi0.values.ravel()

    all_idx = np.arange(quad.node_count)
    cands = _near(quad.q, xin[np.abs(vals) > 1e-300], quad.hbar)

    def coeff(chunk):
        return _coherent_batch(xin, quad.q[chunk], quad.p[chunk], quad.hbar).conj() @ vals

    coeffs = np.zeros(all_idx.size, complex)
    if cands.size:
        coeffs[cands] = np.concatenate(_run(coeff, _chunks(cands), jobs)) * grid.cell_volume
    amp = np.abs(coeffs)
    if amp.max() == 0:
        return GridFunction(out_grid, np.zeros(out_grid.shape))
    idx = np.nonzero(amp > prune * amp.max())[0]
    data = cache.get(t, idx)
    w = quad.weight * quad.chi[idx] * coeffs[idx]

    # every packet has unit norm, so sum |w| sqrt(outside mass) bounds the escaped norm
    leak = 0.0
    for i in range(idx.size):
        cov = 0.5 * quad.hbar * np.linalg.inv(data["Z"][i].imag)
        leak += abs(w[i]) * np.sqrt(min(1.0, outside_mass(out_grid, data["q"][i], cov)))
    if leak**2 > coverage_tol:
        raise DomainCoverageError(f"propagated mass bound {leak**2:.2e} escapes the output grid")

    xout = out_grid.points.reshape(-1, quad.dim)
    order = np.arange(idx.size)

    def part(sel):
        gz = packet_values_batch(xout, quad.q[idx[sel]], quad.p[idx[sel]], data["q"][sel],
                                 data["p"][sel], data["Z"][sel], data["a"][sel], data["S"][sel],
                                 quad.hbar)
        return w[sel] @ gz

    parts = _run(part, _chunks(order), jobs)
    psi = np.sum(np.stack(parts), axis=0).reshape(out_grid.shape)
    return GridFunction(out_grid, psi)


def write_kernel_csv(path, x, y, values) -> None:
    """Write a kernel slice as one row per (x, y) pair, x varying slowest.

    Columns are ``x0.., y0.., re, im, abs``; numbers use 17 significant digits.
    """
    values = np.asarray(values)
    d = 1 if np.ndim(x) <= 1 else np.shape(x)[-1]
    xs, ys = _points(x, d), _points(y, d)
    if values.shape != (xs.shape[0], ys.shape[0]):
        raise ValueError("values must have shape (len(x), len(y))")
    fmt = lambda v: format(float(v), ".17g")  # noqa: E731
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(d)] + [f"y{j}" for j in range(d)] + ["re", "im", "abs"])
        for i, xi in enumerate(xs):
            for j, yj in enumerate(ys):
                v = values[i, j]
                w.writerow([fmt(c) for c in xi] + [fmt(c) for c in yj]
                           + [fmt(v.real), fmt(v.imag), fmt(abs(v))])
