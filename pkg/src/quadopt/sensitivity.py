"""Adjoint gradients of compliance and volume w.r.t. design variables.

Chain (pull form): d/dx = proj'(x) . J_filter^T . T^T . d/drho, where
proj is the tanh projection, J_filter the smooth-min Jacobian, and T the
element-assignment transform.  Frozen cells (fully passive paint sets) get
zero gradient.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from . import filters
from .fea import FEModel
from .filters import DesignField, FilterParams, PNORM_FLOOR
from .hierarchy import DependencyTable
from .mapping import TransformStack


class StaleStateError(ValueError):
    """Gradient request does not match the supplied forward state."""


def dc_drho(model: FEModel, U: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Compliance gradient w.r.t. element densities (non-positive)."""
    rho = np.asarray(rho)
    cache = model.setup()
    ue = U[cache["edof"]]
    quad = np.einsum("ij,jk,ik->i", ue, cache["k0"], ue).reshape(rho.shape)
    return -model.p * rho ** (model.p - 1.0) * (model.E0 - model.Emin) * quad


def dxtilde_dx(xbar: DesignField | np.ndarray, table: DependencyTable,
               p_n: float = -16.0) -> sparse.csr_matrix:
    """Sparse Jacobian of the smooth min filter at the given (projected) point.

    Row r holds d xtilde_r / d xbar_c for c in r's argument set; entries are
    non-negative and each row sums to at most ~1 (weighted-mean structure).
    """
    xf = xbar.flat() if isinstance(xbar, DesignField) else np.asarray(xbar, float)
    if np.any(xf <= 0):
        raise ValueError("smooth min Jacobian requires strictly positive arguments")
    a = np.maximum(xf, PNORM_FLOOR)
    S = table.S
    mean_pow = (S @ (a ** p_n)) / table.arg_counts
    row_fac = mean_pow ** (1.0 / p_n - 1.0) / table.arg_counts
    data = row_fac[np.repeat(np.arange(S.shape[0]), np.diff(S.indptr))]
    data = data * a[S.indices] ** (p_n - 1.0)
    return sparse.csr_matrix((data, S.indices.copy(), S.indptr.copy()),
                             shape=S.shape)


def full_gradients(x: DesignField, params: FilterParams, table: DependencyTable,
                   ts: TransformStack, model: FEModel, U: np.ndarray,
                   rho: np.ndarray) -> tuple[DesignField, DesignField]:
    """(dc/dx, dV/dx) per level, chained through projection, filter, mapping.

    Recomputes the forward chain from ``x`` and raises if it disagrees with
    the supplied ``rho`` (stale state).
    """
    h = table.hierarchy
    xf = x.flat()
    xbar = filters.heaviside_project(xf, params.beta, params.eta)
    xbar_fl = np.maximum(xbar, PNORM_FLOOR)
    xtilde = filters.smooth_min_filter_flat(xbar_fl, table, params.p_n)
    rho_check = ts.apply(DesignField.from_flat(h, xtilde, x_min=x.x_min))
    if not np.allclose(rho_check, rho, atol=1e-10):
        raise StaleStateError("supplied density field does not match the "
                              "design variables; recompute the forward pass")

    g_rho_c = dc_drho(model, U, rho)
    g_xt_c = ts.backproject(g_rho_c)
    g_xt_v = ts.paint_counts.astype(float)

    dproj = filters.heaviside_derivative(xf, params.beta, params.eta)
    g_c = dproj * filters.smooth_min_vjp_flat(xbar_fl, table, params.p_n, g_xt_c)
    g_v = dproj * filters.smooth_min_vjp_flat(xbar_fl, table, params.p_n, g_xt_v)
    g_c[~ts.active_cells] = 0.0
    g_v[~ts.active_cells] = 0.0
    return (DesignField.from_flat(h, g_c, x_min=x.x_min),
            DesignField.from_flat(h, g_v, x_min=x.x_min))
