"""Checks of the algebraic relations satisfied by the variational matrices.

For solutions (A, B) of the variational system with A(t0) = I, B(t0) = iI:

    A^T B - B^T A = 0                     (Z symmetric)
    conj(A) B^T - A conj(B)^T = 2i I      (Poisson, q_t with p_t)
    A conj(A)^T - conj(A) A^T = 0         (Poisson, q_t with q_t)
    B conj(B)^T - conj(B) B^T = 0         (Poisson, p_t with p_t)
    A^* B - B^* A = 2i I                  (Lagrange)
    Im Z = (A A^*)^{-1},  -Im Z^{-1} = (B B^*)^{-1}
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import unitary_group

from .errors import NotUnitaryError, SiegelViolationError

__all__ = [
    "RelationReport",
    "relation_residuals",
    "square_root_correspondence",
    "gauge_orbit_check",
    "random_special_unitary",
    "hermitian_sqrt",
]

_SINGULAR_COND = 1e13


@dataclass
class RelationReport:
    """Frobenius-norm residuals of every relation (absolute).

    Entries that need Z (or Z^{-1}) are None when A (or B) is numerically
    singular; ``z_available`` records this.  ``siegel_pos`` is the smallest
    eigenvalue of Im Z, positive when Z lies in the Siegel half-space.
    """

    symmetry: float
    poisson_qp: float
    poisson_qq: float
    poisson_pp: float
    lagrange: float
    imZ_A: float | None
    imZinv_B: float | None
    siegel_sym: float | None
    siegel_pos: float | None
    det_identity: float | None
    z_available: bool
    norm_A: float
    norm_B: float
    norm_imZ: float | None
    norm_imZinv: float | None
    det_scale: float | None

    RELATIONS = ("symmetry", "poisson_qp", "poisson_qq", "poisson_pp", "lagrange",
                 "imZ_A", "imZinv_B")

    def relative(self) -> dict:
        """Residuals divided by the natural size of each relation."""
        ab = self.norm_A * self.norm_B
        out = {
            "symmetry": _ratio(self.symmetry, ab),
            "poisson_qp": _ratio(self.poisson_qp, ab),
            "poisson_qq": _ratio(self.poisson_qq, self.norm_A**2),
            "poisson_pp": _ratio(self.poisson_pp, self.norm_B**2),
            "lagrange": _ratio(self.lagrange, ab),
        }
        if self.imZ_A is not None:
            out["imZ_A"] = _ratio(self.imZ_A, self.norm_imZ)
            out["siegel_sym"] = _ratio(self.siegel_sym, self.norm_imZ)
            out["det_identity"] = _ratio(self.det_identity, self.det_scale)
        if self.imZinv_B is not None:
            out["imZinv_B"] = _ratio(self.imZinv_B, self.norm_imZinv)
        return out

    def max_relative(self) -> float:
        rel = self.relative()
        return max(v for k, v in rel.items() if k in self.RELATIONS)

    def to_json(self) -> str:
        d = asdict(self)
        d["relative"] = self.relative()
        # non-finite ratios (degenerate pairs) are written as strings
        clean = {k: (str(v) if isinstance(v, float) and not np.isfinite(v) else v)
                 for k, v in d.items() if k != "relative"}
        clean["relative"] = {k: (v if np.isfinite(v) else str(v)) for k, v in d["relative"].items()}
        return json.dumps(clean, sort_keys=True)


def _ratio(num, den):
    if den > 0:
        return num / den
    return 0.0 if num == 0 else float("inf")


def _fro(M):
    return float(np.linalg.norm(M))


def _cond(M):
    s = np.linalg.svd(M, compute_uv=False)
    return np.inf if s[-1] == 0 else s[0] / s[-1]


def relation_residuals(A, B) -> RelationReport:
    """Evaluate every variational-matrix relation for the pair (A, B)."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    d = A.shape[0]
    I2 = 2j * np.eye(d)
    Ac, Bc = A.conj(), B.conj()
    sym = _fro(A.T @ B - B.T @ A)
    pqp = _fro(Ac @ B.T - A @ Bc.T - I2)
    pqq = _fro(A @ Ac.T - Ac @ A.T)
    ppp = _fro(B @ Bc.T - Bc @ B.T)
    lag = _fro(A.conj().T @ B - B.conj().T @ A - I2)

    imZ_A = imZinv_B = siegel_sym = siegel_pos = det_id = None
    norm_imZ = norm_imZinv = det_scale = None
    z_ok = bool(_cond(A) < _SINGULAR_COND)
    if z_ok:
        Z = np.linalg.solve(A.T, B.T).T
        imZ = Z.imag
        imZ_A = _fro(imZ - np.linalg.inv(A @ A.conj().T))
        siegel_sym = _fro(Z - Z.T)
        siegel_pos = float(np.linalg.eigvalsh(0.5 * (imZ + imZ.T)).min())
        norm_imZ = _fro(imZ)
        det_im = np.linalg.det(imZ)
        det_scale = abs(det_im) ** 0.25
        det_id = abs(abs(np.linalg.det(A)) ** -0.5 - det_scale)
    if _cond(B) < _SINGULAR_COND:
        Zinv = np.linalg.solve(B.T, A.T).T
        imZinv_B = _fro(Zinv.imag + np.linalg.inv(B @ B.conj().T))
        norm_imZinv = _fro(Zinv.imag)
    return RelationReport(sym, pqp, pqq, ppp, lag, imZ_A, imZinv_B, siegel_sym, siegel_pos,
                          det_id, z_ok, _fro(A), _fro(B), norm_imZ, norm_imZinv, det_scale)


def hermitian_sqrt(M) -> np.ndarray:
    """Unique positive definite square root of a Hermitian positive definite matrix."""
    M = np.asarray(M)
    w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
    if w.min() <= 0:
        raise SiegelViolationError("matrix is not positive definite")
    return (V * np.sqrt(w)) @ V.conj().T


def square_root_correspondence(Z, tol: float = 1e-10):
    """Canonical variational matrices of a Siegel half-space element.

    Returns ``(A_c, B_c)`` with A_c the positive definite square root of
    (Im Z)^{-1} and B_c = Z A_c, so that B_c A_c^{-1} = Z.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    scale = max(1.0, float(np.max(np.abs(Z))))
    if np.max(np.abs(Z - Z.T)) > tol * scale:
        raise SiegelViolationError("Z is not symmetric")
    imZ = 0.5 * (Z.imag + Z.imag.T)
    if np.linalg.eigvalsh(imZ).min() <= tol:
        raise SiegelViolationError("Im Z is not positive definite")
    A_c = hermitian_sqrt(np.linalg.inv(imZ)).astype(complex)
    return A_c, Z @ A_c


def gauge_orbit_check(A, B, U, log_det_A: complex | None = None, tol: float = 1e-12):
    """Residuals of Z and of the amplitude under (A, B) -> (AU, BU).

    The amplitude of the rotated pair is continued from ``log_det_A`` (the
    tracked branch of the original pair; the principal logarithm when not
    given) by the principal logarithm of det(AU) / det(A).
    """
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    U = np.atleast_2d(np.asarray(U, dtype=complex))
    d = U.shape[0]
    if np.max(np.abs(U.conj().T @ U - np.eye(d))) > tol or abs(np.linalg.det(U) - 1) > tol:
        raise NotUnitaryError("U is not special unitary")
    Z = np.linalg.solve(A.T, B.T).T
    AU, BU = A @ U, B @ U
    Zu = np.linalg.solve(AU.T, BU.T).T
    if log_det_A is None:
        log_det_A = np.log(np.linalg.det(A))
    a = np.exp(-0.5 * log_det_A)
    shift = np.log(np.linalg.det(AU) / np.linalg.det(A))
    a_u = np.exp(-0.5 * (log_det_A + shift))
    return _fro(Zu - Z), float(abs(a_u - a))


def random_special_unitary(d: int, seed=None) -> np.ndarray:
    """Haar-random element of SU(d), deterministic for a given seed."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if d == 1:
        return np.ones((1, 1), dtype=complex)
    U = unitary_group.rvs(d, random_state=np.random.default_rng(seed))
    det = np.linalg.det(U)
    return U * det ** (-1.0 / d)
