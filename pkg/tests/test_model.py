import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agprop import (DrivenOscillator, FreeParticle, HarmonicOscillator, PhasePoint,
                    QuarticAnharmonic, evaluate, finite_difference_audit, make_model)
from agprop.errors import ConfigError, ModelEvaluationError
from agprop.model import HessianBlocks, MODEL_REGISTRY


def test_free_particle_values():
    H, (Hq, Hp), hs = evaluate(FreeParticle(), [0.0], [2.0], 3.7)
    assert H == pytest.approx(2.0)
    np.testing.assert_allclose(Hq, [0.0])
    np.testing.assert_allclose(Hp, [2.0])
    np.testing.assert_allclose(hs.pp, [[1.0]])
    for blk in (hs.qq, hs.qp, hs.pq):
        np.testing.assert_allclose(blk, [[0.0]])


def test_harmonic_values():
    H, (Hq, Hp), hs = evaluate(HarmonicOscillator(1.0), [1.0], [0.0], 0.0)
    assert H == pytest.approx(0.5)
    np.testing.assert_allclose(Hq, [1.0])
    np.testing.assert_allclose(Hp, [0.0])
    np.testing.assert_allclose(hs.qq, [[1.0]])
    np.testing.assert_allclose(hs.pp, [[1.0]])


def test_quartic_hand_derivatives():
    H, (Hq, Hp), hs = evaluate(QuarticAnharmonic(1.0, 0.1), [1.0], [1.0], 0.0)
    assert H == pytest.approx(1.1)
    np.testing.assert_allclose(Hq, [1.4])
    np.testing.assert_allclose(hs.qq, [[2.2]])


def test_harmonic_matrix_frequencies():
    om = np.array([[2.0, 0.5], [0.5, 1.0]])
    m = HarmonicOscillator(om, m=2.0)
    q, p = np.array([0.3, -0.2]), np.array([1.0, 0.4])
    H, (Hq, Hp), hs = evaluate(m, q, p)
    assert H == pytest.approx(p @ p / 4 + q @ om @ q)
    np.testing.assert_allclose(Hq, 2.0 * om @ q)
    np.testing.assert_allclose(hs.pp, np.eye(2) / 2)


def test_driven_time_dependence():
    m = DrivenOscillator(1.0, f0=0.5, nu=1.3)
    assert m.time_dependent
    H0 = evaluate(m, [1.0], [0.0], 0.0)[0]
    H1 = evaluate(m, [1.0], [0.0], np.pi / 1.3)[0]
    assert H1 - H0 == pytest.approx(1.0)


class _Broken(FreeParticle):
    def gradient(self, q, p, t):
        Hq, Hp = super().gradient(q, p, t)
        return Hq + np.nan, Hp


class _Shifted(HarmonicOscillator):
    def gradient(self, q, p, t):
        Hq, Hp = super().gradient(q, p, t)
        return Hq + 0.1, Hp


def test_non_finite_output_names_component():
    with pytest.raises(ModelEvaluationError, match="H_q"):
        evaluate(_Broken(), [0.0], [1.0])


def test_phase_point_validation():
    with pytest.raises(ValueError):
        PhasePoint([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        PhasePoint([np.inf], [1.0])
    assert PhasePoint([1.0], [2.0]).dim == 1


def test_audit_harmonic_exact():
    rep = finite_difference_audit(HarmonicOscillator(1.0), PhasePoint([0.4], [-0.7]), 0.0, 1e-5)
    assert rep.max_residual <= 1e-9


def test_audit_quartic():
    rep = finite_difference_audit(QuarticAnharmonic(1.0, 0.1), PhasePoint([1.0], [1.0]), 0.0, 1e-4)
    assert rep.max_residual <= 1e-6


def test_audit_flags_corrupted_gradient():
    rep = finite_difference_audit(_Shifted(1.0), PhasePoint([0.4], [0.2]), 0.0, 1e-5)
    assert rep.gradient_q == pytest.approx(0.1, rel=1e-3)
    assert not rep.passed(1e-3)


def test_audit_converges_quadratically():
    m, x = QuarticAnharmonic(1.0, 0.1, dim=2), PhasePoint([0.8, -0.5], [0.3, 1.1])
    r = [finite_difference_audit(m, x, 0.0, h).max_residual for h in (1e-2, 1e-3)]
    assert r[1] == pytest.approx(r[0] / 100, rel=0.1)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(sorted(MODEL_REGISTRY)), st.integers(1, 3),
       st.lists(st.floats(-3, 3), min_size=7, max_size=7))
def test_hessian_blocks_symmetric(name, d, vals):
    m = make_model(name, {"dim": d})
    q, p, t = np.array(vals[:d]), np.array(vals[3:3 + d]), vals[6]
    hs = evaluate(m, q, p, t)[2]
    assert isinstance(hs, HessianBlocks)
    np.testing.assert_allclose(hs.qq, hs.qq.T, atol=1e-12)
    np.testing.assert_allclose(hs.pp, hs.pp.T, atol=1e-12)
    np.testing.assert_allclose(hs.pq, hs.qp.T, atol=1e-12)


def test_make_model_errors():
    with pytest.raises(ConfigError) as e:
        make_model("nonsense")
    assert e.value.path == "/model/name"
    with pytest.raises(ConfigError) as e:
        make_model("free_particle", {"bogus": 1})
    assert e.value.path == "/model/params"
    assert isinstance(make_model("HarmonicOscillator"), HarmonicOscillator)


def test_batched_evaluation_matches_pointwise():
    m = QuarticAnharmonic(1.0, 0.1, dim=2)
    rng = np.random.default_rng(0)
    q, p = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    Hq, Hp = m.gradient(q, p, 0.0)
    for i in range(5):
        gq, gp = m.gradient(q[i], p[i], 0.0)
        np.testing.assert_allclose(Hq[i], gq)
        np.testing.assert_allclose(Hp[i], gp)
