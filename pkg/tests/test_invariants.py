import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agprop import (PhasePoint, QuarticAnharmonic, anisotropy, gauge_orbit_check,
                    integrate_characteristics, random_special_unitary, relation_residuals,
                    square_root_correspondence)
from agprop.errors import NotUnitaryError, SiegelViolationError
from agprop.invariants import RelationReport, hermitian_sqrt

ALL = ("symmetry", "poisson_qp", "poisson_qq", "poisson_pp", "lagrange", "imZ_A", "imZinv_B",
       "siegel_sym", "det_identity")


def _zero_report(rep, tol):
    for k in ALL:
        assert getattr(rep, k) <= tol, k


def test_initial_data_exact():
    rep = relation_residuals(np.eye(2), 1j * np.eye(2))
    _zero_report(rep, 0.0)
    assert rep.siegel_pos == 1.0 and rep.z_available


@pytest.mark.parametrize("t", [0.0, 0.4, 1.9, np.pi, 5.5])
def test_harmonic_solution_exact(t):
    A, B = np.array([[np.exp(1j * t)]]), np.array([[1j * np.exp(1j * t)]])
    _zero_report(relation_residuals(A, B), 1e-14)


def test_lagrange_violation_measured():
    for d in (1, 2, 3):
        rep = relation_residuals(np.eye(d), np.eye(d))
        assert rep.lagrange == pytest.approx(2 * np.sqrt(d))


def test_singular_A_omits_Z_entries():
    rep = relation_residuals(np.zeros((1, 1)), 1j * np.eye(1))
    assert not rep.z_available and rep.imZ_A is None and rep.det_identity is None
    assert "imZ_A" not in rep.relative()
    json.loads(rep.to_json())


def test_report_json_roundtrip():
    s = integrate_characteristics(QuarticAnharmonic(1.0, 0.1), PhasePoint([1.0], [0.2]), 0, 1).final
    d = json.loads(relation_residuals(s.A, s.B).to_json())
    assert set(RelationReport.RELATIONS) <= set(d["relative"])


def test_square_root_correspondence_examples():
    A, B = square_root_correspondence(1j * np.eye(2))
    np.testing.assert_allclose(A, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(B, 1j * np.eye(2), atol=1e-15)

    A, B = square_root_correspondence([[2j]])
    assert A[0, 0] == pytest.approx(1 / np.sqrt(2))
    assert B[0, 0] == pytest.approx(1j * np.sqrt(2))
    # |Im Z^{-1}| = 1/2 = (B B^*)^{-1}
    assert abs(np.linalg.inv([[2j]])[0, 0].imag) == pytest.approx(1 / abs(B[0, 0]) ** 2)

    A_c, _ = square_root_correspondence([[(2 + 1j) / 5]])
    assert A_c[0, 0] == pytest.approx(np.sqrt(5))
    A_dyn = 1 + 2j
    assert A_dyn / A_c[0, 0] == pytest.approx((1 + 2j) / np.sqrt(5))


def test_square_root_rejects_non_siegel():
    with pytest.raises(SiegelViolationError):
        square_root_correspondence([[1j, 0.3], [0.0, 1j]])
    with pytest.raises(SiegelViolationError):
        square_root_correspondence([[1.0 - 0.5j]])
    with pytest.raises(SiegelViolationError):
        hermitian_sqrt(-np.eye(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_correspondence_is_a_retraction(d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(d, d))
    Y = rng.normal(size=(d, d))
    Z = (X + X.T) / 2 + 1j * (Y @ Y.T + 0.1 * np.eye(d))
    A, B = square_root_correspondence(Z)
    np.testing.assert_allclose(B @ np.linalg.inv(A), Z, atol=1e-10 * max(1, np.abs(Z).max()))
    rep = relation_residuals(A, B)
    scale = max(1.0, np.linalg.norm(A) * np.linalg.norm(B))
    for k in ("symmetry", "poisson_qp", "poisson_qq", "poisson_pp", "lagrange"):
        assert getattr(rep, k) <= 1e-12 * scale * 10, k
    assert rep.siegel_pos > 0


def test_trajectory_state_correspondence():
    s = integrate_characteristics(QuarticAnharmonic(1.0, 0.1, dim=2),
                                  PhasePoint([1.0, -0.3], [0.2, 0.6]), 0, 2.0, tolerance=1e-12).final
    Z = anisotropy(s)
    A_c, B_c = square_root_correspondence(0.5 * (Z + Z.T), tol=1e-9)
    rel = relation_residuals(A_c, B_c).relative()
    assert max(rel[k] for k in RelationReport.RELATIONS) <= 1e-11


def test_gauge_examples():
    A, B = np.eye(2, dtype=complex), 1j * np.eye(2)
    assert gauge_orbit_check(A, B, np.eye(2)) == (0.0, 0.0)
    assert gauge_orbit_check([[1 + 2j]], [[1j]], [[1.0]]) == (0.0, 0.0)
    th = 0.7
    U = np.array([[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]])
    dz, da = gauge_orbit_check(A, B, U)
    assert dz <= 1e-15 and da <= 1e-15


def test_gauge_rejects_non_special_unitary():
    with pytest.raises(NotUnitaryError):
        gauge_orbit_check(np.eye(2), 1j * np.eye(2), 2 * np.eye(2))
    with pytest.raises(NotUnitaryError):
        gauge_orbit_check(np.eye(2), 1j * np.eye(2), np.diag([1j, 1j]))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_random_special_unitary(d):
    U = random_special_unitary(d, 42)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(d), atol=1e-12)
    assert abs(np.linalg.det(U) - 1) <= 1e-12
    np.testing.assert_array_equal(U, random_special_unitary(d, 42))
    if d > 1:
        assert np.linalg.norm(U - random_special_unitary(d, 43)) > 1e-6
    else:
        np.testing.assert_array_equal(U, [[1.0]])


def test_gauge_with_tracked_branch():
    m = QuarticAnharmonic(1.0, 0.1, dim=3)
    s = integrate_characteristics(m, PhasePoint([1.0, 0.2, -0.5], [0.0, 0.8, 0.3]), 0, 3.0).final
    for seed in range(10):
        dz, da = gauge_orbit_check(s.A, s.B, random_special_unitary(3, seed), s.log_det_A)
        assert dz <= 1e-12 and da <= 1e-12
