import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agprop import (AnisotropicPacket, FreeParticle, Grid, HarmonicOscillator, PhasePoint,
                    coherent_state, integrate_characteristics, packet_eval)
from agprop.errors import BudgetExceededError, DomainCoverageError
from agprop.propagator import (FlowCache, build_quadrature, cutoff, kernel_quadrature,
                               propagate_state, write_kernel_csv)
from agprop.reference import free_gaussian_exact, l2_distance


# -- cutoff ----------------------------------------------------------------------

def test_cutoff_examples():
    assert cutoff([0.0, 0.0], 4.0, 1.0) == 1.0
    assert cutoff([5.0, 0.0], 4.0, 1.0) == 0.0
    assert 0.0 < cutoff([3.5, 0.0], 4.0, 1.0) < 1.0
    assert cutoff([0.0, 3.0], 4.0, 1.0) == 1.0
    assert cutoff([0.0, 4.0], 4.0, 1.0) == 0.0


def test_cutoff_midpoint_is_half():
    # the glue is symmetric about the middle of the transition band
    assert cutoff([3.5, 0.0], 4.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_cutoff_monotone_in_radius():
    r = np.linspace(0, 5, 2001)
    v = cutoff(np.stack([r, np.zeros_like(r)], axis=-1), 4.0, 1.0)
    assert np.all(np.diff(v) <= 0)
    assert np.all((v >= 0) & (v <= 1))
    band = (r > 3.1) & (r < 3.9)
    assert np.all(np.diff(v[band]) < 0)


@pytest.mark.parametrize("w", [0.0, 4.0, 5.0, -1.0])
def test_cutoff_rejects_bad_width(w):
    with pytest.raises(ValueError):
        cutoff([0.0, 0.0], 4.0, w)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 6), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_cutoff_is_radial(r, a, b):
    z1 = [r * np.cos(a), r * np.sin(a)]
    z2 = [r * np.cos(b), r * np.sin(b)]
    assert cutoff(z1, 4.0, 1.5) == pytest.approx(cutoff(z2, 4.0, 1.5), abs=1e-12)


# -- quadrature ------------------------------------------------------------------

def test_quadrature_example():
    quad = build_quadrature(4.0, 1.0, 0.25, 0.5)
    assert quad.spacing == pytest.approx(0.25)
    assert quad.lattice_shape == (33, 33)
    assert quad.lattice_count == 33 * 33
    assert np.max(np.abs(quad.q)) <= 4.0 and np.max(np.abs(quad.p)) <= 4.0
    assert np.all(quad.chi > 0)
    assert quad.weight == pytest.approx(0.25**2 / (2 * np.pi * 0.25))
    r = np.hypot(quad.q[:, 0], quad.p[:, 0])
    assert np.all(r < 4.0)
    # every lattice point inside the plateau is kept
    k = np.arange(-16, 17) * 0.25
    qq, pp = np.meshgrid(k, k)
    assert quad.node_count >= np.sum(np.hypot(qq, pp) <= 3.0)


def test_quadrature_halving_spacing_quadruples_nodes():
    a = build_quadrature(4.0, 1.0, 0.25, 0.5)
    b = build_quadrature(4.0, 1.0, 0.25, 0.25)
    assert b.node_count / a.node_count == pytest.approx(4.0, rel=0.05)


def test_quadrature_rejections():
    with pytest.raises(ValueError):
        build_quadrature(0.5, 1.0, 0.25)
    with pytest.raises(ValueError):
        build_quadrature(4.0, 1.0, 0.25, 0.0)
    with pytest.raises(ValueError):
        build_quadrature(4.0, 1.0, -0.1)
    with pytest.raises(BudgetExceededError):
        build_quadrature(4.0, 1.0, 0.25, 0.5, node_cap=1000)
    with pytest.raises(BudgetExceededError):
        build_quadrature(4.0, 1.0, 0.01, 0.25, dim=2)


# -- reconstruction at t0 ----------------------------------------------------------

def _reconstruct(hbar, rho, c, x0=(0.5, -0.5), n=256, box=(-10, 10)):
    g = Grid(box[0], box[1], n)
    psi0 = coherent_state(g, [x0[0]], [x0[1]], hbar)
    quad = build_quadrature(rho, 1.0, hbar, c)
    return l2_distance(propagate_state(FreeParticle(), psi0, 0.0, 0.0, quad), psi0)


def test_identity_resolution_at_t0():
    errs = [_reconstruct(0.5, 6.0, c) for c in (1.0, 0.5, 0.25)]
    assert errs[1] <= 1e-3
    assert errs[0] > errs[1] > errs[2]


def test_identity_resolution_improves_with_rho():
    errs = [_reconstruct(0.5, rho, 0.5) for rho in (3.0, 4.0, 6.0)]
    assert errs[0] > errs[1] > errs[2]


# -- propagation -------------------------------------------------------------------

def test_free_kernel_applied_to_coherent_state():
    hb, t = 0.1, 1.0
    quad = build_quadrature(6.0, 1.0, hb, 0.5)
    y = np.linspace(-3, 3, 241)
    x = np.linspace(-3, 5, 321)
    psi0 = coherent_state(y, [0.0], [1.0], hb)
    K = kernel_quadrature(FreeParticle(), x, y, 0.0, t, quad)
    psi = K @ psi0 * (y[1] - y[0])
    exact = free_gaussian_exact(x, t, [0.0], [1.0], hb)
    err = np.sqrt(np.sum(np.abs(psi - exact) ** 2) * (x[1] - x[0]))
    assert err <= 1e-3


def test_free_state_propagation():
    hb, t = 0.1, 1.0
    g = Grid(-4, 6, 256)
    quad = build_quadrature(6.0, 1.0, hb, 0.5)
    psi = propagate_state(FreeParticle(), coherent_state(g, [0.0], [1.0], hb), 0.0, t, quad)
    assert l2_distance(psi, free_gaussian_exact(g, t, [0.0], [1.0], hb)) <= 1e-3


def test_harmonic_quarter_period_matches_single_packet():
    hb, t = 0.1, np.pi / 2
    g = Grid(-4, 4, 256)
    quad = build_quadrature(6.0, 1.0, hb, 0.5)
    m, x0 = HarmonicOscillator(1.0), PhasePoint([1.0], [0.0])
    psi = propagate_state(m, coherent_state(g, x0.q, x0.p, hb), 0.0, t, quad)
    pk = AnisotropicPacket.from_trajectory(integrate_characteristics(m, x0, 0.0, t), -1, hb)
    single = packet_eval(g, pk)
    err = l2_distance(psi, single)
    assert err <= 1e-3
    # consistency: within the t0 reconstruction error of the same quadrature plus the
    # orbit integration error
    psi_t0 = propagate_state(m, coherent_state(g, x0.q, x0.p, hb), 0.0, 0.0, quad)
    assert err <= l2_distance(psi_t0, coherent_state(g, x0.q, x0.p, hb)) + 1e-8


def test_superposition_matches_separate_packets():
    hb, t = 0.1, 1.0
    g = Grid(-8, 8, 256)
    quad = build_quadrature(6.0, 1.0, hb, 0.5)
    raw = coherent_state(g, [2.0], [0.0], hb) + coherent_state(g, [-2.0], [0.0], hb)
    nrm = raw.norm()
    psi = propagate_state(FreeParticle(), raw * (1 / nrm), 0.0, t, quad)
    expect = (free_gaussian_exact(g, t, [2.0], [0.0], hb)
              + free_gaussian_exact(g, t, [-2.0], [0.0], hb)) * (1 / nrm)
    assert l2_distance(psi, expect) <= 1e-3


def test_linearity_to_rounding():
    hb, t = 0.2, 0.7
    g = Grid(-6, 6, 128)
    quad = build_quadrature(5.0, 1.0, hb, 0.5)
    cache = FlowCache(HarmonicOscillator(1.0), quad, 0.0)
    f1 = coherent_state(g, [1.0], [0.5], hb)
    f2 = coherent_state(g, [-1.0], [0.0], hb)
    al, be = 0.3 - 0.2j, 1.1 + 0.4j
    prop = lambda f: propagate_state(HarmonicOscillator(1.0), f, 0.0, t, quad, cache=cache,  # noqa: E731
                                     prune=0.0)
    lhs = prop(al * f1 + be * f2)
    rhs = al * prop(f1) + be * prop(f2)
    assert l2_distance(lhs, rhs) <= 1e-12


def test_kernel_vanishes_as_support_shrinks():
    hb = 0.1
    vals = []
    for rho in (1.0, 0.5, 0.25, 0.125):
        # spacing tied to rho keeps the node pattern fixed while the support shrinks
        quad = build_quadrature(rho, rho / 2, hb, spacing_factor=rho / 4 / np.sqrt(hb))
        vals.append(abs(kernel_quadrature(FreeParticle(), [0.1], [0.0], 0.0, 0.5, quad)[0, 0]))
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.05 * vals[0]


def test_cache_reuse_and_mismatch():
    hb = 0.2
    quad = build_quadrature(4.0, 1.0, hb, 0.5)
    cache = FlowCache(FreeParticle(), quad, 0.0)
    x, y = np.linspace(-1, 1, 5), np.linspace(-1, 1, 4)
    k1 = kernel_quadrature(FreeParticle(), x, y, 0.0, 0.5, quad, cache=cache)
    assert 0.5 in cache.cached_times
    k2 = kernel_quadrature(FreeParticle(), x, y, 0.0, 0.5, quad, cache=cache)
    assert np.array_equal(k1, k2)
    np.testing.assert_array_equal(k1, kernel_quadrature(FreeParticle(), x, y, 0.0, 0.5, quad))
    with pytest.raises(ValueError):
        kernel_quadrature(FreeParticle(), x, y, 0.1, 0.5, quad, cache=cache)


def test_parallel_sum_is_bitwise_deterministic():
    hb = 0.1
    g = Grid(-4, 6, 256)
    quad = build_quadrature(6.0, 1.0, hb, 0.5)
    psi0 = coherent_state(g, [0.0], [1.0], hb)
    a = propagate_state(FreeParticle(), psi0, 0.0, 1.0, quad, jobs=1)
    b = propagate_state(FreeParticle(), psi0, 0.0, 1.0, quad, jobs=3)
    assert np.array_equal(a.values, b.values)


def test_escaping_mass_raises():
    hb = 0.1
    g = Grid(-3, 3, 128)
    quad = build_quadrature(6.0, 1.0, hb, 0.5)
    with pytest.raises(DomainCoverageError):
        propagate_state(FreeParticle(), coherent_state(g, [0.0], [2.0], hb), 0.0, 2.0, quad)


def test_unnormalized_input_warns(caplog):
    hb = 0.5
    g = Grid(-8, 8, 64)
    quad = build_quadrature(5.0, 1.0, hb, 0.5)
    with caplog.at_level("WARNING"):
        propagate_state(FreeParticle(), 2 * coherent_state(g, [0.0], [0.0], hb), 0.0, 0.0, quad)
    assert "norm" in caplog.text


def test_kernel_csv_export(tmp_path):
    x, y = np.array([0.0, 0.5]), np.array([-1.0, 0.0, 1.0])
    vals = np.arange(6).reshape(2, 3) * (1 + 1j) / 3
    path = tmp_path / "kernel.csv"
    write_kernel_csv(path, x, y, vals)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x0", "y0", "re", "im", "abs"]
    assert len(rows) == 7
    assert [float(v) for v in rows[6][:4]] == [0.5, 1.0, vals[1, 2].real, vals[1, 2].imag]
    assert complex(float(rows[3][2]), float(rows[3][3])) == vals[0, 2]
    with pytest.raises(ValueError):
        write_kernel_csv(path, x, y, vals.T)
