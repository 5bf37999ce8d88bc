"""Element stiffness, assembly, solves, and energy/volume metrics."""

import numpy as np
import pytest

from quadopt import fea
from quadopt.fea import (FEModel, SolverError, assemble_and_solve,
                         cell_strain_energy_density, element_energies,
                         element_stiffness_unit, sharpness, volume,
                         volume_fraction)


def test_element_stiffness_symmetric():
    k0 = element_stiffness_unit(0.3)
    np.testing.assert_allclose(k0, k0.T, atol=1e-14)


def test_element_stiffness_rigid_body_modes():
    k0 = element_stiffness_unit(0.3)
    tx = np.tile([1.0, 0.0], 4)
    ty = np.tile([0.0, 1.0], 4)
    # rotation about the element center (nodes ccw from bottom-left)
    xy = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float) - 0.5
    rot = np.column_stack([-xy[:, 1], xy[:, 0]]).ravel()
    for mode in (tx, ty, rot):
        np.testing.assert_allclose(k0 @ mode, 0.0, atol=1e-12)
    # exactly three zero eigenvalues
    w = np.linalg.eigvalsh(k0)
    assert np.sum(np.abs(w) < 1e-10) == 3


def test_element_stiffness_positive_semidefinite():
    w = np.linalg.eigvalsh(element_stiffness_unit(0.3))
    assert w.min() > -1e-12


def test_patch_row_sums_vanish():
    # 2x2 patch assembled without constraints: free translations are in
    # equilibrium, so every row of K sums to zero
    k0 = element_stiffness_unit(0.3)
    nely = nelx = 2
    ndof = 2 * (nelx + 1) * (nely + 1)
    K = np.zeros((ndof, ndof))
    for ey in range(nely):
        for ex in range(nelx):
            n1 = ex * (nely + 1) + ey
            n2 = (ex + 1) * (nely + 1) + ey
            dofs = np.array([2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1,
                             2 * (n2 + 1), 2 * (n2 + 1) + 1,
                             2 * (n1 + 1), 2 * (n1 + 1) + 1])
            K[np.ix_(dofs, dofs)] += k0
    # x-rows sum against x-translation, y-rows against y-translation
    tx = np.zeros(ndof); tx[0::2] = 1.0
    ty = np.zeros(ndof); ty[1::2] = 1.0
    np.testing.assert_allclose(K @ tx, 0.0, atol=1e-12)
    np.testing.assert_allclose(K @ ty, 0.0, atol=1e-12)


def _cantilever_model(nelx=16, nely=8, fy=-1.0):
    nely1 = nely + 1
    fixed = np.arange(2 * nely1)          # left edge, both components
    F = np.zeros(2 * (nelx + 1) * nely1)
    F[2 * (nelx * nely1 + nely // 2) + 1] = fy
    return FEModel(nelx=nelx, nely=nely, fixed_dofs=fixed, F=F)


def test_zero_load_gives_zero_solution():
    m = _cantilever_model(fy=0.0)
    m.F[:] = 0.0
    res = assemble_and_solve(m, np.ones((8, 16)))
    assert res.c == 0.0
    assert np.all(res.U == 0.0)


def test_compliance_scales_quadratically_with_load():
    m1 = _cantilever_model(fy=-1.0)
    m2 = _cantilever_model(fy=-3.0)
    rho = np.full((8, 16), 0.7)
    c1 = assemble_and_solve(m1, rho).c
    c2 = assemble_and_solve(m2, rho).c
    assert c2 == pytest.approx(9.0 * c1, rel=1e-10)


def test_more_material_is_stiffer():
    m = _cantilever_model()
    c_half = assemble_and_solve(m, np.full((8, 16), 0.5)).c
    c_full = assemble_and_solve(m, np.ones((8, 16))).c
    assert 0 < c_full < c_half


def test_direct_and_cg_agree():
    m = _cantilever_model()
    rng = np.random.default_rng(0)
    rho = rng.uniform(0.3, 1.0, (8, 16))
    cd = assemble_and_solve(m, rho, solver="direct").c
    cc = assemble_and_solve(m, rho, solver="cg").c
    assert cc == pytest.approx(cd, rel=1e-6)


def test_unknown_solver_rejected():
    m = _cantilever_model()
    with pytest.raises(ValueError):
        assemble_and_solve(m, np.ones((8, 16)), solver="magic")


def test_no_supports_rejected():
    F = np.zeros(2 * 17 * 9)
    F[-1] = 1.0
    m = FEModel(nelx=16, nely=8, fixed_dofs=np.empty(0, dtype=int), F=F)
    with pytest.raises(SolverError):
        assemble_and_solve(m, np.ones((8, 16)))


def test_density_shape_validated():
    m = _cantilever_model()
    with pytest.raises(ValueError):
        assemble_and_solve(m, np.ones((4, 4)))


def test_splu_fallback_matches_cholmod():
    if not fea._HAS_CHOLMOD:
        pytest.skip("cvxopt not available")
    m = _cantilever_model()
    rng = np.random.default_rng(1)
    rho = rng.uniform(0.2, 1.0, (8, 16))
    c1 = assemble_and_solve(m, rho).c
    try:
        fea._HAS_CHOLMOD = False
        c2 = assemble_and_solve(m, rho).c
    finally:
        fea._HAS_CHOLMOD = True
    assert c2 == pytest.approx(c1, rel=1e-8)


def test_volume_metrics():
    assert volume(np.zeros((4, 4))) == 0.0
    assert volume(np.full((4, 4), 0.5)) == pytest.approx(8.0)
    assert volume_fraction(np.full((4, 4), 0.5)) == pytest.approx(0.5)


def test_sharpness():
    assert sharpness(np.array([0.0, 1.0, 1.0, 0.0])) == 0.0
    assert sharpness(np.full((4, 4), 0.5)) == pytest.approx(1.0)
    active = np.array([True, True, False, False])
    assert sharpness(np.array([0.5, 0.5, 0.25, 0.25]),
                     active=active) == pytest.approx(1.0)


def test_element_energies_zero_displacement():
    m = _cantilever_model()
    e = element_energies(m, np.zeros(m.ndof), np.ones((8, 16)))
    np.testing.assert_array_equal(e, 0.0)


def test_element_energies_sum_to_compliance():
    m = _cantilever_model()
    rng = np.random.default_rng(2)
    rho = rng.uniform(0.3, 1.0, (8, 16))
    res = assemble_and_solve(m, rho)
    e = element_energies(m, res.U, rho)
    assert e.sum() == pytest.approx(res.c, rel=1e-9)


def test_cell_energy_density_mean_and_ranking():
    m = _cantilever_model()
    rho = np.ones((8, 16))
    res = assemble_and_solve(m, rho)
    e = element_energies(m, res.U, rho).ravel()
    near = np.array([15 + 16 * 3, 15 + 16 * 4])    # next to the load
    far = np.array([15, 15 + 16 * 7])              # unloaded right-edge corners
    assert cell_strain_energy_density(m, res.U, rho, near) > \
        cell_strain_energy_density(m, res.U, rho, far)
    assert cell_strain_energy_density(m, res.U, rho, near) == \
        pytest.approx(e[near].mean())
    with pytest.raises(ValueError):
        cell_strain_energy_density(m, res.U, rho, np.empty(0, dtype=int))


def test_repeated_load_factorization():
    m = _cantilever_model()
    rho = np.full((8, 16), 0.8)
    factor = fea.factorize(m, rho)
    r1 = fea.solve_with_factor(m, factor, m.F)
    r2 = assemble_and_solve(m, rho)
    assert r1.c == pytest.approx(r2.c, rel=1e-12)
    F2 = np.zeros_like(m.F); F2[m.ndof - 1] = 1.0   # free right-edge dof
    r3 = fea.solve_with_factor(m, factor, F2)
    assert np.isfinite(r3.c) and r3.c > 0


def test_model_validation():
    with pytest.raises(ValueError):
        FEModel(nelx=4, nely=4, fixed_dofs=[0], F=np.zeros(3))
    F = np.zeros(2 * 5 * 5)
    with pytest.raises(ValueError):
        FEModel(nelx=4, nely=4, fixed_dofs=[0], F=F, Emin=2.0)
    with pytest.raises(ValueError):
        FEModel(nelx=4, nely=4, fixed_dofs=[0], F=F, p=0.5)
    with pytest.raises(ValueError):
        element_stiffness_unit(0.6)
