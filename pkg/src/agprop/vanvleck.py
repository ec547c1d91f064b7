"""Classical boundary-value shooting and the Van Vleck kernel.

Branches are the roots p of F(p) = q_t(y, p) - x.  Each root is found by
damped Newton iterations whose Jacobian dq_t/dp = Im A comes from the
variational system, so no finite differences enter the shooting.
"""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import qmc

from .errors import (CausticAtRootError, CausticProximityError, NoBranchFoundError,
                     UnresolvedCrossingError)
from .flow import CharacteristicState, Trajectory, integrate_batch, integrate_characteristics
from .model import HamiltonianModel, PhasePoint
from .propagator import cutoff

__all__ = [
    "VanVleckBranch",
    "find_branches",
    "shoot_branch",
    "maslov_index",
    "vanvleck_kernel",
    "write_branch_table",
    "SHOOTING_TOLERANCE",
]

logger = logging.getLogger(__name__)

SHOOTING_TOLERANCE = 1e-10
# integrator tolerance used while shooting; tighter than the flow default so that
# the discrete flow map is smooth enough for Newton to reach SHOOTING_TOLERANCE
SHOOTING_FLOW_TOLERANCE = 1e-12
_SHOOTING_COND_CAP = 1e14
_CAUSTIC_REL = 1e-8
_CROSSING_REL = 1e-6
_MAX_NEWTON = 60
_MAX_HALVINGS = 30


@dataclass
class VanVleckBranch:
    """One classical orbit from (y, t0) to (x, t).

    ``amp_det`` is |det dq_t/dp|^{-1} on the orbit.  ``cutoff_value`` is the
    cutoff at (y, p_r), or 1 when no cutoff was supplied.
    """

    p_r: np.ndarray
    S_r: float
    amp_det: float
    m_r: int
    final_state: CharacteristicState
    cutoff_value: float
    residual: float
    iterations: int
    trajectory: Trajectory | None = None

    @property
    def in_plateau(self) -> bool:
        return self.cutoff_value >= 1.0


def _flow_end(model, y, P, t0, t, tol):
    """q_t, p_t, Im A at time t for initial momenta P (N, d); failed rows are NaN."""
    N, d = P.shape
    Y = np.broadcast_to(y, (N, d))
    try:
        bf = integrate_batch(model, Y, P, t0, [t], tol, _SHOOTING_COND_CAP)
        return bf.q[0], bf.p[0], bf.A[0].imag
    except CausticProximityError:
        if N == 1:
            nan = np.full((1, d), np.nan)
            return nan, nan.copy(), np.full((1, d, d), np.nan)
    # isolate the offending starts
    parts = [_flow_end(model, y, P[i:i + 1], t0, t, tol) for i in range(N)]
    return tuple(np.concatenate([pt[k] for pt in parts]) for k in range(3))


def _newton(model, y, x, P, t0, t, tol, flow_tol):
    """Batched damped Newton on F(p) = q_t(y, p) - x.  Returns (P, |F|, iterations, ok)."""
    P = P.copy()
    N = P.shape[0]
    target = tol * (1.0 + np.linalg.norm(x))
    q, _, J = _flow_end(model, y, P, t0, t, flow_tol)
    F = q - x
    res = np.linalg.norm(F, axis=1)
    res[~np.isfinite(res)] = np.inf
    iters = np.zeros(N, int)
    active = np.isfinite(res) & (res > target)
    for _ in range(_MAX_NEWTON):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        delta = np.empty((idx.size, P.shape[1]))
        for k, i in enumerate(idx):
            delta[k] = -np.linalg.lstsq(J[i], F[i], rcond=None)[0]
        alpha = np.ones(idx.size)
        pending = np.ones(idx.size, bool)
        for _ in range(_MAX_HALVINGS):
            sel = np.nonzero(pending)[0]
            if sel.size == 0:
                break
            trial = P[idx[sel]] + alpha[sel, None] * delta[sel]
            qn, _, Jn = _flow_end(model, y, trial, t0, t, flow_tol)
            Fn = qn - x
            rn = np.linalg.norm(Fn, axis=1)
            good = np.isfinite(rn) & (rn**2 <= (1 - 1e-4 * alpha[sel]) * res[idx[sel]] ** 2)
            g = sel[good]
            P[idx[g]] = trial[good]
            F[idx[g]] = Fn[good]
            J[idx[g]] = Jn[good]
            res[idx[g]] = rn[good]
            pending[g] = False
            alpha[sel[~good]] *= 0.5
        iters[idx] += 1
        # a start whose line search failed cannot make progress
        stalled = idx[pending]
        active[stalled] = False
        active &= res > target
    ok = res <= target
    return P, res, iters, ok


def _seeds(search_box, d, n_starts, seed):
    lo, hi = _box(search_box, d)
    sampler = qmc.Sobol(d, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = sampler.random(n_starts)
    return lo + u * (hi - lo)


def _box(search_box, d):
    box = np.asarray(search_box, dtype=float)
    if box.ndim == 0:
        lo, hi = -abs(box) * np.ones(d), abs(box) * np.ones(d)
    else:
        box = box.reshape(2, -1) if box.size == 2 * d else box
        lo = np.broadcast_to(box[0], (d,)).astype(float)
        hi = np.broadcast_to(box[1], (d,)).astype(float)
    if np.any(hi <= lo) or not np.all(np.isfinite(np.concatenate([lo, hi]))):
        raise ValueError("search box must be bounded and non-empty")
    return lo, hi


def _caustic_check(J, p_r):
    s = np.linalg.svd(J, compute_uv=False)
    if s[-1] < _CAUSTIC_REL * max(1.0, s[0]):
        raise CausticAtRootError(
            f"dq_t/dp is singular at the root p = {np.array2string(p_r, precision=6)} "
            f"(smallest singular value {s[-1]:.2e})")


def _make_branch(model, y, p_r, t0, t, res, iters, flow_tol, rho_w, method):
    traj = integrate_characteristics(model, PhasePoint(y, p_r), t0, t - t0, tolerance=flow_tol,
                                     cond_cap=_SHOOTING_COND_CAP, dense=True)
    fin = traj.final
    J = fin.A.imag
    _caustic_check(J, p_r)
    amp_det = 1.0 / abs(np.linalg.det(J))
    chi = 1.0 if rho_w is None else float(cutoff(np.concatenate([y, p_r]), *rho_w))
    m = maslov_index(traj, method=method)
    return VanVleckBranch(p_r.copy(), float(fin.S), amp_det, m, fin, chi, float(res), int(iters),
                          traj)


def find_branches(model: HamiltonianModel, y, x, t0: float, t: float, search_box=5.0,
                  n_starts: int = 64, tol: float = SHOOTING_TOLERANCE, *, seed: int = 0,
                  cutoff_params: tuple | None = None, maslov_method: str = "crossings",
                  flow_tolerance: float = SHOOTING_FLOW_TOLERANCE, jobs: int = 1) -> list:
    """All orbits from (y, t0) to (x, t) with initial momentum in ``search_box``.

    Parameters
    ----------
    search_box : float or (lo, hi)
        A number b means the cube [-b, b]^d; otherwise lower and upper corners.
    n_starts : int
        Number of scrambled Sobol seeds for the multistart Newton search.
    tol : float
        Convergence when |q_t - x| <= tol (1 + |x|); roots closer than 10 tol merge.
    cutoff_params : (rho, width), optional
        Cutoff whose value at (y, p_r) is recorded on each branch.

    Returns
    -------
    list of VanVleckBranch
        Sorted by |p_r|.  Completeness is relative to the search box.

    Raises
    ------
    NoBranchFoundError
        When no start converges inside the box.
    CausticAtRootError
        When dq_t/dp is singular at a converged root.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = model.dim
    if y.shape != (d,) or x.shape != (d,):
        raise ValueError(f"endpoints must be {d}-vectors")
    if not t > t0:
        raise ValueError("need t > t0")
    if n_starts < 1:
        raise ValueError("n_starts must be positive")
    lo, hi = _box(search_box, d)
    seeds = _seeds((lo, hi), d, n_starts, seed)

    chunks = np.array_split(np.arange(n_starts), max(1, min(jobs, n_starts)))
    work = lambda ix: _newton(model, y, x, seeds[ix], t0, t, tol, flow_tolerance)  # noqa: E731
    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(work, chunks))
    else:
        outs = [work(ix) for ix in chunks]
    P = np.concatenate([o[0] for o in outs])
    res = np.concatenate([o[1] for o in outs])
    its = np.concatenate([o[2] for o in outs])
    ok = np.concatenate([o[3] for o in outs])
    margin = 1e-9 * np.maximum(1.0, np.abs(hi - lo))
    ok &= np.all((P >= lo - margin) & (P <= hi + margin), axis=1)
    if not ok.any():
        raise NoBranchFoundError(
            f"no orbit from y={y.tolist()} reaches x={x.tolist()} at t={t} with initial momentum "
            f"in [{lo.tolist()}, {hi.tolist()}]; the search box may be too small")

    order = np.lexsort((np.arange(n_starts), np.linalg.norm(P, axis=1)))
    roots = []
    for i in order:
        if not ok[i]:
            continue
        if any(np.linalg.norm(P[i] - P[j]) < 10 * tol for j in roots):
            continue
        roots.append(i)
    logger.info("%d of %d starts converged to %d distinct roots", int(ok.sum()), n_starts,
                len(roots))
    branches = [_make_branch(model, y, P[i], t0, t, res[i], its[i], flow_tolerance,
                             cutoff_params, maslov_method) for i in roots]
    branches.sort(key=lambda b: float(np.linalg.norm(b.p_r)))
    return branches


def shoot_branch(model: HamiltonianModel, y, x, t0: float, t: float, p_guess,
                 tol: float = SHOOTING_TOLERANCE, *, maslov_method: str = "crossings",
                 flow_tolerance: float = SHOOTING_FLOW_TOLERANCE) -> VanVleckBranch:
    """Newton from a single initial momentum, for continuing a known branch."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    P = np.atleast_2d(np.asarray(p_guess, dtype=float))
    P, res, its, ok = _newton(model, y, x, P, t0, t, tol, flow_tolerance)
    if not ok[0]:
        raise NoBranchFoundError(f"Newton from p={np.ravel(p_guess).tolist()} did not converge "
                                 f"(residual {res[0]:.2e})")
    return _make_branch(model, y, P[0], t0, t, res[0], its[0], flow_tolerance, None, maslov_method)


# -- Maslov index --------------------------------------------------------------

def _smin(traj, tau):
    J = traj.dense_jacobian_qp(np.atleast_1d(tau))
    return np.linalg.svd(J, compute_uv=False)


def maslov_index(traj: Trajectory, method: str = "crossings") -> int:
    """Maslov index of an orbit integrated with dense output.

    ``method="crossings"`` (default) counts the zeros of det dq_t/dp on
    (t0, t] with multiplicity, the multiplicity being the number of
    singular values of dq_t/dp that vanish at the crossing.  Zeros are
    located as interior minima of the smallest singular value on the dense
    interpolant and refined by bounded scalar minimization.

    ``method="index"`` evaluates round(sum Arg(lambda) / pi) over the
    eigenvalues of A^{-1} (Im A)^{-1} at the final time.  It is kept for
    comparison only; it does not reproduce the known quadratic-model phases.
    """
    if method == "index":
        A = traj.final.A
        M = np.linalg.solve(A, np.linalg.inv(A.imag))
        return int(np.rint(np.sum(np.angle(np.linalg.eigvals(M))) / np.pi))
    if method != "crossings":
        raise ValueError(f"unknown Maslov method {method!r}")

    tn = traj.step_times
    # four samples per accepted step resolve each monotone stretch of s_min
    tau = np.unique(np.concatenate([tn, *(tn[:-1] + f * np.diff(tn) for f in (0.25, 0.5, 0.75))]))
    J = traj.dense_jacobian_qp(tau)
    sv = np.linalg.svd(J, compute_uv=False)
    smin = sv[:, -1]
    scale = max(1.0, float(np.max(sv[:, 0])))
    det_sign = np.sign(np.linalg.det(J))
    thresh = _CROSSING_REL * scale

    crossings = []
    n = tau.size
    for k in range(1, n):
        last = k == n - 1
        if not (smin[k] <= smin[k - 1] and (last or smin[k] <= smin[k + 1])):
            continue
        lo_t = tau[k - 1]
        hi_t = tau[k] if last else tau[k + 1]
        r = minimize_scalar(lambda s: _smin(traj, s)[0, -1], bounds=(lo_t, hi_t),
                            method="bounded", options={"xatol": 1e-13 * max(1.0, abs(hi_t))})
        t_star, s_star = (float(r.x), float(r.fun)) if r.fun < smin[k] else (tau[k], smin[k])
        if s_star < thresh and t_star > tau[0] + 1e-12 * max(1.0, abs(tau[0])):
            # vanishing singular values sit far below the geometric mean of s_min and scale
            mult = int(np.sum(_smin(traj, t_star)[0] < np.sqrt(max(s_star, 1e-300) * scale)))
            crossings.append((t_star, max(1, mult)))

    # merge minima found twice from neighbouring samples
    merged = []
    for t_star, mult in sorted(crossings):
        if merged and abs(t_star - merged[-1][0]) < 1e-6 * max(1.0, abs(t_star)):
            merged[-1] = (merged[-1][0], max(mult, merged[-1][1]))
        else:
            merged.append((t_star, mult))

    # every sign change of det dq_t/dp must sit next to a located crossing
    for k in range(2, n):
        if det_sign[k] * det_sign[k - 1] < 0:
            lo_t, hi_t = tau[k - 2], tau[min(k + 1, n - 1)]
            if not any(lo_t <= c <= hi_t for c, _ in merged):
                raise UnresolvedCrossingError(
                    f"det dq/dp changes sign in [{tau[k - 1]:.6g}, {tau[k]:.6g}] but no zero "
                    "was localized; integrate with a finer output resolution")
    return int(sum(m for _, m in merged))


# -- kernel ----------------------------------------------------------------------

def vanvleck_kernel(x, y, t0: float, t: float, hbar: float, branches: list) -> complex:
    """(2 pi i hbar)^{-d/2} sum_r sqrt(amp_det_r) exp(i S_r / hbar - i pi m_r / 2).

    The prefactor uses the principal branch, i^{-d/2} = exp(-i pi d / 4).
    An empty branch list gives 0.
    """
    if not hbar > 0:
        raise ValueError("hbar must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    if not branches:
        return 0j
    pref = np.exp(-0.25j * np.pi * d) * (2 * np.pi * hbar) ** (-d / 2)
    total = 0j
    for b in branches:
        if abs(b.final_state.t - t) > 1e-12 * max(1.0, abs(t)):
            raise ValueError("branch ends at a different time")
        total += np.sqrt(b.amp_det) * np.exp(1j * b.S_r / hbar - 0.5j * np.pi * b.m_r)
    return complex(pref * total)


def write_branch_table(path, branches: list) -> None:
    """CSV table: p_r components, S_r, amp_det, m_r, cutoff_value and Newton diagnostics."""
    d = branches[0].p_r.size if branches else 1
    fmt = lambda v: format(float(v), ".17g")  # noqa: E731
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"p_r{i}" for i in range(d)]
                   + ["S_r", "amp_det", "m_r", "cutoff_value", "residual", "iterations"])
        for b in branches:
            w.writerow([*map(fmt, b.p_r), fmt(b.S_r), fmt(b.amp_det), str(int(b.m_r)),
                        fmt(b.cutoff_value), fmt(b.residual), str(int(b.iterations))])
