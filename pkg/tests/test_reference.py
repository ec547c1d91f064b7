import numpy as np
import pytest

from agprop import (AnisotropicPacket, FreeParticle, Grid, GridFunction, HarmonicOscillator,
                    PhasePoint, QuarticAnharmonic, coherent_state, integrate_characteristics)
from agprop.errors import DomainCoverageError, GridMismatchError, StabilityGuardError
from agprop.reference import (SplitStepConfig, free_gaussian_exact, free_kernel, l2_distance,
                              mehler_kernel, residual_norm, split_step_solve)


def _solver(model, lo, hi, n, dt, hbar):
    return SplitStepConfig.from_model(model, Grid(lo, hi, n), dt, hbar)


def test_free_gaussian_vs_split_step():
    cfg = _solver(FreeParticle(), -8, 12, 1024, 1e-3, 0.1)
    psi0 = coherent_state(cfg.grid, [0.0], [1.0], 0.1)
    psi = split_step_solve(cfg, psi0, 0.0, 1.0)
    exact = free_gaussian_exact(cfg.grid, 1.0, [0.0], [1.0], 0.1)
    assert l2_distance(psi, exact) <= 1e-8
    assert abs(psi.norm() - 1) <= 1e-10


def test_free_gaussian_exact_at_zero_is_coherent_state():
    x = np.linspace(-3, 3, 50)
    np.testing.assert_allclose(free_gaussian_exact(x, 0.0, [0.5], [1.0], 0.3),
                               coherent_state(x, [0.5], [1.0], 0.3), atol=1e-15)


def test_harmonic_period_returns_state():
    cfg = _solver(HarmonicOscillator(1.0), -6, 6, 512, 1e-3, 0.1)
    psi0 = coherent_state(cfg.grid, [1.0], [0.0], 0.1)
    psi = split_step_solve(cfg, psi0, 0.0, 2 * np.pi)
    ov = np.sum(np.conj(psi.values) * psi0.values) * cfg.grid.cell_volume
    assert abs(ov) == pytest.approx(1.0, abs=1e-8)
    assert ov == pytest.approx(-1.0, abs=1e-5)


def test_norm_conserved_per_step():
    cfg = _solver(QuarticAnharmonic(1.0, 0.1), -6, 6, 256, 2e-3, 0.2)
    psi = coherent_state(cfg.grid, [1.0], [0.5], 0.2)
    for k in range(1, 6):
        nxt = split_step_solve(cfg, psi, 0.0, 2e-3)
        assert abs(nxt.norm() - psi.norm()) <= 1e-12
        psi = nxt


def test_second_order_in_dt():
    m = QuarticAnharmonic(1.0, 0.1)
    g = Grid(-6, 6, 128)
    psi0 = coherent_state(g, [1.0], [0.0], 0.1)

    def run(dt):
        return split_step_solve(SplitStepConfig.from_model(m, g, dt, 0.1), psi0, 0.0, 1.0).values

    p1, p2, p3, p4 = (run(dt) for dt in (0.02, 0.01, 0.005, 0.0025))
    limit = (4 * p4 - p3) / 3
    e = [np.linalg.norm(p - limit) for p in (p1, p2, p3)]
    assert e[0] / e[1] == pytest.approx(4.0, rel=0.2)
    assert e[1] / e[2] == pytest.approx(4.0, rel=0.2)


def test_time_dependent_potential_midpoint():
    from agprop import DrivenOscillator
    m = DrivenOscillator(1.0, f0=0.5, nu=1.3)
    g = Grid(-8, 8, 512)
    hb = 0.1
    psi0 = coherent_state(g, [0.5], [0.0], hb)
    psi = split_step_solve(SplitStepConfig.from_model(m, g, 1e-3, hb), psi0, 0.0, 2.0)
    # driven quadratic: the flow packet is exact, so the two must agree
    x0 = PhasePoint([0.5], [0.0])
    pk = AnisotropicPacket.from_trajectory(integrate_characteristics(m, x0, 0.0, 2.0), -1, hb)
    from agprop import packet_eval
    assert l2_distance(psi, packet_eval(g, pk)) <= 1e-5


def test_guards():
    cfg = _solver(FreeParticle(), -2, 2, 64, 1e-3, 1.0)
    psi0 = coherent_state(cfg.grid, [0.0], [3.0], 1.0)
    with pytest.raises(DomainCoverageError):
        split_step_solve(cfg, psi0, 0.0, 2.0)
    with pytest.raises(StabilityGuardError):
        split_step_solve(_solver(FreeParticle(), -2, 2, 1024, 1.0, 1.0),
                         coherent_state(Grid(-2, 2, 1024), [0.0], [0.0], 1.0), 0.0, 1.0)
    with pytest.raises(GridMismatchError):
        split_step_solve(cfg, coherent_state(Grid(-2, 2, 128), [0.0], [0.0], 1.0), 0.0, 1.0)
    with pytest.raises(ValueError):
        SplitStepConfig.from_model(__import__("agprop").HamiltonianModel(1), cfg.grid, 0.1, 1.0)


def test_l2_distance_examples():
    g = Grid(-12, 12, 512)
    f0 = coherent_state(g, [0.0], [0.0], 1.0)
    assert l2_distance(f0, f0) == 0.0
    assert l2_distance(f0, -1 * f0) == pytest.approx(2.0, abs=1e-12)
    f2 = coherent_state(g, [2.0], [0.0], 1.0)
    assert l2_distance(f0, f2) == pytest.approx(np.sqrt(2 - 2 * np.exp(-1)), abs=1e-12)
    assert l2_distance(f0, f2) == l2_distance(f2, f0)
    with pytest.raises(GridMismatchError):
        l2_distance(f0, coherent_state(Grid(-12, 12, 256), [0.0], [0.0], 1.0))


def _state(model, x0, t):
    return integrate_characteristics(model, x0, 0.0, t, tolerance=1e-12).final


@pytest.mark.parametrize("model", [FreeParticle(), HarmonicOscillator(1.0)])
def test_residual_floor_on_quadratic_models(model):
    x0 = PhasePoint([1.0], [0.5])
    for t in (0.3, 1.0, 2.5):
        s = _state(model, x0, t)
        g = Grid(s.q[0] - 6, s.q[0] + 6, 1024) if isinstance(model, HarmonicOscillator) else \
            Grid(s.q[0] - 10, s.q[0] + 10, 1024)
        assert residual_norm(model, s, x0, 0.1, g) <= 1e-8


def test_residual_equals_taylor_remainder():
    """For H = p^2/2 + V the residual is -(V - quadratic Taylor polynomial of V at q_t) G."""
    m, hb, x0 = QuarticAnharmonic(1.0, 0.1), 0.2, PhasePoint([1.0], [0.0])
    s = _state(m, x0, 0.5)
    g = Grid(s.q[0] - 6, s.q[0] + 6, 1024)
    pk = AnisotropicPacket(hb, x0, PhasePoint(s.q, s.p), s.B @ np.linalg.inv(s.A),
                           complex(np.exp(-0.5 * s.log_det_A)), s.S)
    from agprop import packet_eval
    G = packet_eval(g, pk).values
    x, qt = g.axes[0], s.q[0]
    V = lambda y: 0.5 * y**2 + 0.1 * y**4  # noqa: E731
    taylor = V(qt) + (qt + 0.4 * qt**3) * (x - qt) + 0.5 * (1 + 1.2 * qt**2) * (x - qt) ** 2
    oracle = np.sqrt(np.sum(np.abs((V(x) - taylor) * G) ** 2) * g.cell_volume)
    assert residual_norm(m, s, x0, hb, g) == pytest.approx(oracle, rel=1e-7)


def test_residual_scales_as_hbar_three_halves():
    m, x0 = QuarticAnharmonic(1.0, 0.1), PhasePoint([1.0], [0.0])
    s = _state(m, x0, 0.5)
    hbs = np.array([0.4, 0.2, 0.1, 0.05])
    r = [residual_norm(m, s, x0, hb, Grid(s.q[0] - 12 * np.sqrt(hb), s.q[0] + 12 * np.sqrt(hb),
                                          512)) for hb in hbs]
    slope = np.polyfit(np.log(hbs), np.log(r), 1)[0]
    assert 1.35 <= slope <= 1.65


def test_free_kernel_against_split_step():
    hb, t = 0.5, 1.0
    g = Grid(-16, 16, 1024)
    psi0 = coherent_state(g, [0.3], [0.5], hb)
    psi = split_step_solve(SplitStepConfig.from_model(FreeParticle(), g, 5e-4, hb), psi0, 0.0, t)
    y = g.axes[0]
    for i in (400, 512, 560):
        K = np.array([free_kernel(g.axes[0][i], yy, t, hb) for yy in y])
        assert np.sum(K * psi0.values) * g.cell_volume == pytest.approx(psi.values[i], abs=1e-8)


@pytest.mark.parametrize("t", [np.pi / 4, 3 * np.pi / 2])
def test_mehler_kernel_against_split_step(t):
    hb = 0.5
    g = Grid(-10, 10, 512)
    psi0 = coherent_state(g, [0.5], [-0.3], hb)
    cfg = SplitStepConfig.from_model(HarmonicOscillator(1.0), g, 1e-3, hb)
    psi = split_step_solve(cfg, psi0, 0.0, t)
    y = g.axes[0]
    for i in (220, 256, 300):
        K = np.array([mehler_kernel(y[i], yy, t, hb) for yy in y])
        assert np.sum(K * psi0.values) * g.cell_volume == pytest.approx(psi.values[i], abs=1e-6)
