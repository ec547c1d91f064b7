"""Hamiltonian models with analytic derivatives.

Every model evaluates on arrays with arbitrary leading batch dimensions:
``q`` and ``p`` have shape ``(..., d)``, the value has shape ``(...)``, the
gradient blocks ``(..., d)`` and the Hessian blocks ``(..., d, d)``.  Models
hold no mutable state, so one instance may be shared between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, ModelEvaluationError

__all__ = [
    "PhasePoint",
    "HessianBlocks",
    "HamiltonianModel",
    "MechanicalForm",
    "FreeParticle",
    "HarmonicOscillator",
    "QuarticAnharmonic",
    "DrivenOscillator",
    "evaluate",
    "finite_difference_audit",
    "AuditReport",
    "MODEL_REGISTRY",
    "make_model",
]


@dataclass(frozen=True)
class PhasePoint:
    """A point (q, p) of phase space R^{2d}."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.ndim != 1 or q.shape != p.shape:
            raise ValueError(f"q and p must be vectors of equal length, got {q.shape} and {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase point has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])


class HessianBlocks(NamedTuple):
    """Second derivatives, ``qp[..., i, j] = d2H / dq_i dp_j`` and ``pq = qp^T``."""

    qq: np.ndarray
    qp: np.ndarray
    pq: np.ndarray
    pp: np.ndarray


class MechanicalForm(NamedTuple):
    """Decomposition H = |p|^2 / (2 m) + V(q, t)."""

    mass: float
    potential: Callable[[np.ndarray, float], np.ndarray]


class HamiltonianModel:
    """Interface for a smooth Hamiltonian H(q, p, t).

    Subclasses implement :meth:`value`, :meth:`gradient` and :meth:`hessian`.
    The returned derivatives must be exact; :func:`finite_difference_audit`
    checks them.  Models of the form |p|^2/2m + V(q, t) also return a
    :class:`MechanicalForm` from :meth:`mechanical_form`, which is what the
    split-step reference solver needs.
    """

    name = "custom"
    time_dependent = False

    def __init__(self, dim: int):
        if int(dim) < 1:
            raise ValueError("dimension must be >= 1")
        self.dim = int(dim)

    def value(self, q, p, t):
        raise NotImplementedError

    def gradient(self, q, p, t):
        """Return ``(H_q, H_p)``."""
        raise NotImplementedError

    def hessian(self, q, p, t) -> HessianBlocks:
        raise NotImplementedError

    def mechanical_form(self) -> MechanicalForm | None:
        return None

    def params(self) -> dict:
        return {}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


def _eye_like(q):
    d = q.shape[-1]
    return np.broadcast_to(np.eye(d), q.shape[:-1] + (d, d))


def _zeros_dd(q):
    d = q.shape[-1]
    return np.zeros(q.shape[:-1] + (d, d))


class FreeParticle(HamiltonianModel):
    """H = |p|^2 / (2 m)."""

    name = "free_particle"

    def __init__(self, m: float = 1.0, dim: int = 1):
        super().__init__(dim)
        if not m > 0:
            raise ValueError("mass must be positive")
        self.m = float(m)

    def params(self):
        return {"m": self.m, "dim": self.dim}

    def value(self, q, p, t):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=-1) / self.m

    def gradient(self, q, p, t):
        p = np.asarray(p, dtype=float)
        return np.zeros_like(p), p / self.m

    def hessian(self, q, p, t):
        q = np.asarray(q, dtype=float)
        z = _zeros_dd(q)
        return HessianBlocks(z, z, z, _eye_like(q) / self.m)

    def mechanical_form(self):
        return MechanicalForm(self.m, lambda x, t: np.zeros(np.shape(x)[:-1]))


class HarmonicOscillator(HamiltonianModel):
    """H = |p|^2 / (2 m) + (m / 2) q . Omega^2 q.

    ``omega2`` is the symmetric positive definite frequency-squared matrix
    (a scalar is read as a multiple of the identity), so the normal-mode
    angular frequencies are the square roots of its eigenvalues for any mass.
    """

    name = "harmonic_oscillator"

    def __init__(self, omega2=1.0, m: float = 1.0, dim: int | None = None):
        w = np.asarray(omega2, dtype=float)
        if w.ndim == 0:
            dim = 1 if dim is None else dim
            w = float(w) * np.eye(dim)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("omega2 must be a scalar or a square matrix")
        if dim is not None and w.shape[0] != dim:
            raise ValueError("omega2 shape does not match dim")
        if not np.allclose(w, w.T, rtol=0, atol=1e-14 * max(1.0, np.abs(w).max())):
            raise ValueError("omega2 must be symmetric")
        if np.linalg.eigvalsh(w).min() <= 0:
            raise ValueError("omega2 must be positive definite")
        if not m > 0:
            raise ValueError("mass must be positive")
        super().__init__(w.shape[0])
        self.omega2 = 0.5 * (w + w.T)
        self.m = float(m)

    def params(self):
        return {"omega2": self.omega2.tolist(), "m": self.m}

    def _potential(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.m * np.einsum("...i,ij,...j->...", x, self.omega2, x)

    def value(self, q, p, t):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=-1) / self.m + self._potential(q)

    def gradient(self, q, p, t):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return self.m * q @ self.omega2, p / self.m

    def hessian(self, q, p, t):
        q = np.asarray(q, dtype=float)
        z = _zeros_dd(q)
        qq = np.broadcast_to(self.m * self.omega2, z.shape)
        return HessianBlocks(qq, z, z, _eye_like(q) / self.m)

    def mechanical_form(self):
        return MechanicalForm(self.m, self._potential)


class QuarticAnharmonic(HamiltonianModel):
    """H = |p|^2/2 + omega2 |q|^2 / 2 + lam * sum_j q_j^4."""

    name = "quartic_anharmonic"

    def __init__(self, omega2: float = 1.0, lam: float = 0.1, dim: int = 1):
        super().__init__(dim)
        self.omega2 = float(omega2)
        self.lam = float(lam)

    def params(self):
        return {"omega2": self.omega2, "lam": self.lam, "dim": self.dim}

    def _potential(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        return np.sum(0.5 * self.omega2 * x * x + self.lam * x**4, axis=-1)

    def value(self, q, p, t):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=-1) + self._potential(q)

    def gradient(self, q, p, t):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return self.omega2 * q + 4.0 * self.lam * q**3, p.copy()

    def hessian(self, q, p, t):
        q = np.asarray(q, dtype=float)
        z = _zeros_dd(q)
        diag = self.omega2 + 12.0 * self.lam * q * q
        qq = diag[..., :, None] * np.eye(self.dim)
        return HessianBlocks(qq, z, z, _eye_like(q))

    def mechanical_form(self):
        return MechanicalForm(1.0, self._potential)


class DrivenOscillator(HamiltonianModel):
    """H = |p|^2/2 + omega2 |q|^2/2 - f0 cos(nu t) sum_j q_j."""

    name = "driven_oscillator"
    time_dependent = True

    def __init__(self, omega2: float = 1.0, f0: float = 0.5, nu: float = 1.3, dim: int = 1):
        super().__init__(dim)
        self.omega2 = float(omega2)
        self.f0 = float(f0)
        self.nu = float(nu)

    def params(self):
        return {"omega2": self.omega2, "f0": self.f0, "nu": self.nu, "dim": self.dim}

    def _potential(self, x, t):
        x = np.asarray(x, dtype=float)
        return np.sum(0.5 * self.omega2 * x * x - self.f0 * np.cos(self.nu * t) * x, axis=-1)

    def value(self, q, p, t):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=-1) + self._potential(q, t)

    def gradient(self, q, p, t):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return self.omega2 * q - self.f0 * np.cos(self.nu * t), p.copy()

    def hessian(self, q, p, t):
        q = np.asarray(q, dtype=float)
        z = _zeros_dd(q)
        qq = self.omega2 * _eye_like(q)
        return HessianBlocks(qq, z, z, _eye_like(q))

    def mechanical_form(self):
        return MechanicalForm(1.0, self._potential)


def _check_finite(name, arr):
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ModelEvaluationError(f"model returned non-finite {name}")


def evaluate(model: HamiltonianModel, q, p, t=0.0):
    """Return ``(value, (H_q, H_p), HessianBlocks)`` at (q, p, t).

    ``q`` and ``p`` may be a :class:`PhasePoint` (pass it as ``q`` and leave
    ``p`` as None) or batched arrays.
    """
    if isinstance(q, PhasePoint):
        q, p = q.q, q.p
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    h = model.value(q, p, t)
    g = model.gradient(q, p, t)
    hs = model.hessian(q, p, t)
    _check_finite("value", h)
    _check_finite("gradient H_q", g[0])
    _check_finite("gradient H_p", g[1])
    for name, block in zip(HessianBlocks._fields, hs):
        _check_finite(f"hessian H_{name}", block)
    return h, g, hs


@dataclass
class AuditReport:
    """Deviations between analytic derivatives and central differences."""

    gradient_q: float
    gradient_p: float
    hessian: float
    symmetry: float
    step: float

    @property
    def max_residual(self) -> float:
        return max(self.gradient_q, self.gradient_p, self.hessian, self.symmetry)

    def passed(self, tol: float) -> bool:
        return self.max_residual <= tol


def _rel(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))) if np.size(a) else 0.0


def finite_difference_audit(model: HamiltonianModel, x: PhasePoint, t: float = 0.0,
                            step: float = 1e-5) -> AuditReport:
    """Compare the model's analytic derivatives with central differences.

    The gradient is checked against differences of the value, the Hessian
    against differences of the gradient.  Relative deviations are measured
    as ``|analytic - fd| / max(1, |analytic|)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    d = x.dim
    z = x.as_array()

    def split(v):
        return v[:d], v[d:]

    def val(v):
        return float(model.value(*split(v), t))

    def grad(v):
        gq, gp = model.gradient(*split(v), t)
        return np.concatenate([np.asarray(gq, float), np.asarray(gp, float)])

    fd_grad = np.empty(2 * d)
    fd_hess = np.empty((2 * d, 2 * d))
    for k in range(2 * d):
        e = np.zeros(2 * d)
        e[k] = step
        fd_grad[k] = (val(z + e) - val(z - e)) / (2 * step)
        fd_hess[:, k] = (grad(z + e) - grad(z - e)) / (2 * step)

    g = grad(z)
    hs = model.hessian(x.q, x.p, t)
    full = np.block([[hs.qq, hs.qp], [hs.pq, hs.pp]])
    sym = max(
        float(np.max(np.abs(hs.qq - hs.qq.T))),
        float(np.max(np.abs(hs.pp - hs.pp.T))),
        float(np.max(np.abs(hs.pq - hs.qp.T))),
    )
    return AuditReport(
        gradient_q=_rel(g[:d], fd_grad[:d]),
        gradient_p=_rel(g[d:], fd_grad[d:]),
        hessian=_rel(full, fd_hess),
        symmetry=sym,
        step=step,
    )


MODEL_REGISTRY = {
    FreeParticle.name: FreeParticle,
    HarmonicOscillator.name: HarmonicOscillator,
    QuarticAnharmonic.name: QuarticAnharmonic,
    DrivenOscillator.name: DrivenOscillator,
}

_ALIASES = {
    "FreeParticle": FreeParticle.name,
    "HarmonicOscillator": HarmonicOscillator.name,
    "QuarticAnharmonic": QuarticAnharmonic.name,
    "DrivenOscillator": DrivenOscillator.name,
}


def make_model(name: str, params: dict | None = None) -> HamiltonianModel:
    """Build a builtin model from its registry name and a flat parameter table."""
    key = _ALIASES.get(name, name)
    if key not in MODEL_REGISTRY:
        raise ConfigError(f"unknown model {name!r}; known: {sorted(MODEL_REGISTRY)}", "/model/name")
    try:
        return MODEL_REGISTRY[key](**(params or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "/model/params") from exc
