"""Benchmark definitions, boundary resolution, masks, and the sweep."""

import numpy as np
import pytest

from quadopt import fea, problems
from quadopt.filters import DesignField
from quadopt.hierarchy import QuadtreeHierarchy
from quadopt.problems import (PointLoad, PointSupport, ProblemSpec, Support,
                              build_problem, elliptical_mask, make_bracket,
                              make_cantilever, make_masked, make_mbb,
                              resolve_boundary, robustness_sweep,
                              uniform_reference)


def test_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec("x", 2, 1, 4, 0.4, supports=[Support("left")], loads=[])
    with pytest.raises(ValueError):
        ProblemSpec("x", 2, 1, 4, 0.4, supports=[],
                    loads=[PointLoad(1, 0.5, 0, -1)])
    with pytest.raises(ValueError):
        ProblemSpec("x", 2, 1, 4, 1.4, supports=[Support("left")],
                    loads=[PointLoad(1, 0.5, 0, -1)])
    with pytest.raises(ValueError):
        Support("middle")
    with pytest.raises(ValueError):
        Support("left", "z")


def test_cantilever_boundary():
    spec = make_cantilever(n0=(2, 1), m=3, volfrac=0.4)
    h = QuadtreeHierarchy(2, 1, 3)
    fixed, F = resolve_boundary(spec, h)
    assert len(fixed) == 2 * (h.nely + 1)          # left edge, both dofs
    loaded = np.nonzero(F)[0]
    assert len(loaded) == 1
    # y dof of the right-edge mid-height node
    node = h.nelx * (h.nely + 1) + h.nely // 2
    assert loaded[0] == 2 * node + 1
    assert F[loaded[0]] == -1.0


def test_zero_load_rejected():
    spec = make_cantilever(n0=(2, 1), m=3)
    spec.loads = [PointLoad(1.0, 0.5, 0.0, 0.0)]
    with pytest.raises(ValueError):
        resolve_boundary(spec, QuadtreeHierarchy(2, 1, 3))


def test_edge_span_support():
    h = QuadtreeHierarchy(2, 2, 3)
    spec = ProblemSpec("x", 2, 2, 3, 0.4,
                       supports=[Support("left", "both", (0.0, 0.5))],
                       loads=[PointLoad(1, 0.5, 0, -1)])
    fixed, _ = resolve_boundary(spec, h)
    assert len(fixed) == 2 * (h.nely // 2 + 1)


def test_mbb_mirror_symmetry_compliance():
    # the half-model with symmetry rollers matches half the compliance of
    # the explicitly mirrored full beam
    half = make_mbb(n0=(4, 2), m=3, volfrac=0.3)
    bh = build_problem(half)
    rng = np.random.default_rng(0)
    rho_h = rng.uniform(0.3, 1.0, (bh.hierarchy.nely, bh.hierarchy.nelx))
    c_half = fea.assemble_and_solve(bh.model, rho_h).c

    nelx, nely = 2 * bh.hierarchy.nelx, bh.hierarchy.nely
    nely1 = nely + 1
    F = np.zeros(2 * (nelx + 1) * nely1)
    F[2 * ((nelx // 2) * nely1 + nely) + 1] = -2.0   # mirrored load doubles
    fixed = [2 * (0 * nely1 + 0) + 1, 2 * (nelx * nely1 + 0) + 1,
             2 * (0 * nely1 + 0)]                    # corner rollers + one x
    model = fea.FEModel(nelx=nelx, nely=nely, fixed_dofs=np.array(fixed), F=F)
    rho_full = np.hstack([rho_h[:, ::-1], rho_h])
    c_full = fea.assemble_and_solve(model, rho_full).c
    assert c_full == pytest.approx(2.0 * c_half, rel=1e-5)


def test_elliptical_mask_touches_edges():
    h = QuadtreeHierarchy(6, 4, 4)
    mask = elliptical_mask(h)
    assert mask[h.nely // 2, 0] and mask[h.nely // 2, -1]
    assert mask[0, h.nelx // 2] and mask[-1, h.nelx // 2]
    assert not mask[0, 0] and not mask[-1, -1]


def test_masked_all_void_rejected():
    h = QuadtreeHierarchy(2, 1, 3)
    with pytest.raises(ValueError):
        make_masked(np.zeros((h.nely, h.nelx), dtype=bool), (2, 1), 3,
                    supports=[Support("left")], loads=[PointLoad(1, .5, 0, -1)],
                    volfrac=0.3)


def test_masked_shape_rejected():
    with pytest.raises(ValueError):
        make_masked(np.ones((3, 3), dtype=bool), (2, 1), 3,
                    supports=[Support("left")], loads=[PointLoad(1, .5, 0, -1)],
                    volfrac=0.3)


def test_uniform_reference_monotone():
    spec = make_cantilever(n0=(2, 1), m=5, volfrac=0.4)
    b = build_problem(spec)
    tree0, vf0 = uniform_reference(b, 0)
    assert not any(r.any() for r in tree0.refined)
    assert vf0 == pytest.approx(b.ts.base.sum() / b.ts.n_elements)
    vfs = [uniform_reference(b, r)[1] for r in range(b.hierarchy.kbar + 1)]
    assert all(a < bb for a, bb in zip(vfs, vfs[1:]))
    with pytest.raises(ValueError):
        uniform_reference(b, b.hierarchy.kbar + 1)


def test_bracket_volume_fraction_from_uniform_reference():
    spec = make_bracket(n0=(6, 4), m=5)
    # the default target comes from the uniform 2-level reference;
    # roughly a third of the bounding box
    assert 0.2 < spec.volfrac < 0.45
    b = build_problem(spec)
    assert b.ts.passive_void.any()
    assert b.ts.passive_solid.any()


def test_robustness_sweep_contract():
    spec = make_cantilever(n0=(2, 1), m=3, volfrac=0.4)
    b = build_problem(spec)
    rho = np.ones((b.hierarchy.nely, b.hierarchy.nelx))
    res = problems.robustness_sweep(b, rho, n_positions=11)
    assert len(res.positions) == len(res.compliances) == 11
    # position 0 lands on the clamped top-left corner, giving zero compliance
    assert np.all(res.compliances >= 0)
    assert np.all(res.compliances[1:] > 0)
    assert res.spread == pytest.approx(res.compliances.max() -
                                       res.compliances.min())
    # zero-magnitude perturbation gives a flat zero curve
    flat = problems.robustness_sweep(b, rho, n_positions=5, magnitude=0.0)
    np.testing.assert_array_equal(flat.compliances, 0.0)


def test_robustness_sweep_default_magnitude_scales_with_load():
    spec = make_cantilever(n0=(2, 1), m=3, volfrac=0.4)
    b = build_problem(spec)
    rho = np.ones((b.hierarchy.nely, b.hierarchy.nelx))
    r1 = problems.robustness_sweep(b, rho, n_positions=7)
    r2 = problems.robustness_sweep(b, rho, n_positions=7,
                                   magnitude=0.1 * np.abs(b.model.F).max())
    np.testing.assert_allclose(r1.compliances, r2.compliances)


def test_build_problem_modes_differ():
    spec = make_cantilever(n0=(2, 1), m=4)
    bu = build_problem(spec, mode="unbalanced")
    bb = build_problem(spec, mode="balanced")
    assert bu.table.S.nnz < bb.table.S.nnz
    assert bu.model.nelx == bb.model.nelx == 32
