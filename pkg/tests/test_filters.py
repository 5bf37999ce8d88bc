"""Projection, exact min filter, smooth p-norm min, and their composition."""

import numpy as np
import pytest

from quadopt.filters import (DesignField, FilterParams, PNORM_FLOOR,
                             exact_min_filter, exact_min_filter_flat,
                             filter_chain, heaviside_derivative,
                             heaviside_project, smooth_min_filter_flat,
                             smooth_min_vjp_flat)
from quadopt.hierarchy import QuadtreeHierarchy, build_dependency_table


def test_projection_endpoints_fixed():
    for beta in (1.0, 8.0, 32.0):
        assert heaviside_project(0.0, beta) == pytest.approx(0.0, abs=1e-15)
        assert heaviside_project(1.0, beta) == pytest.approx(1.0, abs=1e-15)


def test_projection_midpoint_symmetry():
    for beta in (1.0, 32.0):
        assert heaviside_project(0.5, beta, eta=0.5) == pytest.approx(0.5)


def test_projection_sharpens():
    assert heaviside_project(0.6, 32.0, 0.5) > 0.95
    assert heaviside_project(0.4, 32.0, 0.5) < 0.05


def test_projection_monotone():
    x = np.linspace(0, 1, 201)
    for beta in (1.0, 8.0, 32.0):
        y = heaviside_project(x, beta)
        assert np.all(np.diff(y) > 0)


def test_projection_derivative_matches_fd():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.05, 0.95, 200)
    h = 1e-6
    for beta in (1.0, 8.0, 32.0):
        fd = (heaviside_project(x + h, beta) - heaviside_project(x - h, beta)) / (2 * h)
        an = heaviside_derivative(x, beta)
        # normalize by the largest derivative: at beta=32 the tails saturate
        # and the FD quotient there is pure roundoff
        assert np.max(np.abs(an - fd)) / np.max(np.abs(fd)) < 1e-5


def test_params_validation():
    with pytest.raises(ValueError):
        FilterParams(p_n=2.0)
    with pytest.raises(ValueError):
        FilterParams(beta=0.5)
    with pytest.raises(ValueError):
        FilterParams(eta=1.5)


def _table(mode="unbalanced", n0=(2, 1), m=5):
    h = QuadtreeHierarchy(n0[0], n0[1], m)
    return h, build_dependency_table(h, mode)


def test_exact_min_zero_parent_kills_child():
    h, t = _table()
    x = DesignField.homogeneous(h, 1.0)
    x.levels[0][:] = 0.0     # all level-1 parents zero
    out = exact_min_filter(x, t)
    for lv in out.levels[1:]:
        assert np.all(lv == 0.0)


def test_exact_min_solid_parent_leaves_child_unchanged():
    h, t = _table()
    rng = np.random.default_rng(0)
    x = DesignField.from_flat(h, rng.uniform(0.2, 0.9, h.total_cells))
    for lv in x.levels[:-1]:
        lv[:] = 1.0
    out = exact_min_filter(x, t)
    np.testing.assert_allclose(out.levels[-1], x.levels[-1])


def test_exact_min_closure_random_binary():
    # thresholded filtered field never keeps a cell whose ancestor chain
    # contains a zero
    h, t = _table("unbalanced")
    rng = np.random.default_rng(7)
    for _ in range(20):
        xf = np.where(rng.random(h.total_cells) < 0.5, 1.0, 0.0)
        out = exact_min_filter_flat(xf, t)
        for g in range(h.total_cells):
            if out[g] == 1.0:
                assert all(out[d] == 1.0 for d in t.deps[g])


def test_smooth_min_equal_arguments_exact():
    h, t = _table("balanced")
    out = smooth_min_filter_flat(np.ones(h.total_cells), t)
    np.testing.assert_allclose(out, 1.0, atol=1e-14)


def test_smooth_min_two_argument_value():
    # ((0.5^-16 + 1)/2)^(-1/16), frozen by direct evaluation
    val = ((0.5 ** -16 + 1.0) / 2.0) ** (-1.0 / 16.0)
    assert val == pytest.approx(0.5221, abs=5e-4)
    h = QuadtreeHierarchy(1, 1, 4)   # single parent chain: (1,1) levels 1,2
    t = build_dependency_table(h, "unbalanced")
    xf = np.full(h.total_cells, 1.0)
    xf[h.gid(1, 0, 0)] = 0.5
    out = smooth_min_filter_flat(xf, t)
    child = [g for g in range(h.total_cells)
             if h.gid_to_cell(g)[0] == 2 and len(t.deps[g]) == 1]
    assert out[child[0]] == pytest.approx(val, rel=1e-12)


def test_smooth_min_binary_pattern_sweep_tolerance():
    # all binary argument patterns up to N=5, x_min standing in for 0:
    # the p-norm surrogate stays within 0.06 of the exact min
    p_n = -16.0
    x_min = 1e-3
    worst = 0.0
    for n in range(1, 6):
        for bits in range(2 ** n):
            a = np.array([1.0 if bits >> i & 1 else x_min for i in range(n)])
            smooth = (np.mean(a ** p_n)) ** (1.0 / p_n)
            worst = max(worst, abs(smooth - a.min()))
    assert worst <= 0.06


def test_smooth_min_rejects_nonpositive():
    h, t = _table()
    with pytest.raises(ValueError):
        smooth_min_filter_flat(np.zeros(h.total_cells), t)


def test_smooth_min_vjp_matches_fd():
    h, t = _table("balanced", m=4)
    rng = np.random.default_rng(11)
    xf = rng.uniform(0.1, 1.0, h.total_cells)
    g_out = rng.standard_normal(h.total_cells)
    g_in = smooth_min_vjp_flat(xf, t, -16.0, g_out)
    step = 1e-7
    fd = np.zeros_like(xf)
    for i in range(len(xf)):
        xp = xf.copy(); xp[i] += step
        xm = xf.copy(); xm[i] -= step
        fd[i] = g_out @ (smooth_min_filter_flat(xp, t) -
                         smooth_min_filter_flat(xm, t)) / (2 * step)
    scale = np.max(np.abs(fd))
    assert np.max(np.abs(g_in - fd)) / scale < 1e-5


def test_chain_uniform_equals_projection():
    # dependencies all equal -> min is the identity
    h, t = _table("balanced")
    x = DesignField.homogeneous(h, 0.49)
    _, xt = filter_chain(x, FilterParams(beta=1.0), t)
    np.testing.assert_allclose(xt.flat(), heaviside_project(0.49, 1.0),
                               atol=1e-12)


def test_chain_binary_matches_exact_min():
    h, t = _table("unbalanced")
    rng = np.random.default_rng(5)
    params = FilterParams(beta=32.0)
    for _ in range(10):
        xf = np.where(rng.random(h.total_cells) < 0.5, 1.0, 1e-3)
        _, xt = filter_chain(DesignField.from_flat(h, xf), params, t)
        exact = exact_min_filter_flat(np.round(xf), t)
        assert np.max(np.abs(xt.flat() - exact)) <= 0.07


def test_chain_floor_keeps_values_finite_at_high_beta():
    h, t = _table("balanced")
    x = DesignField.homogeneous(h, 1e-3)
    _, xt = filter_chain(x, FilterParams(beta=32.0), t)
    assert np.all(np.isfinite(xt.flat()))
    assert np.all(xt.flat() >= PNORM_FLOOR)


def test_design_field_flat_roundtrip():
    h = QuadtreeHierarchy(3, 2, 4)
    rng = np.random.default_rng(1)
    flat = rng.random(h.total_cells)
    x = DesignField.from_flat(h, flat)
    np.testing.assert_array_equal(x.flat(), flat)
    assert [lv.shape for lv in x.levels] == [(ny, nx) for nx, ny in h.level_res]
