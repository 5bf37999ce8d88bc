"""Refinement filters: exact minimum, smooth p-norm minimum, and projection.

The exact min filter is the ground-truth operator: a cell's refinement is
capped by the smallest value in its dependency closure.  The smooth variant
replaces min with a normalized p-norm (negative exponent) so the whole
pipeline stays differentiable.  The tanh projection sharpens intermediate
values toward 0/1 as beta grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hierarchy import DependencyTable, QuadtreeHierarchy

X_MIN_DEFAULT = 1e-3

# Floor applied to smooth-min arguments.  Projected values can underflow to
# ~1e-15 at beta=32; the floor keeps negative powers finite without touching
# anything in the usable design range.
PNORM_FLOOR = 1e-12


@dataclass
class FilterParams:
    """Parameters of the smooth filter chain."""

    p_n: float = -16.0
    beta: float = 1.0
    eta: float = 0.5

    def __post_init__(self):
        if self.p_n >= 0:
            raise ValueError(f"p-norm exponent must be negative, got {self.p_n}")
        if self.beta < 1:
            raise ValueError(f"projection sharpness must be >= 1, got {self.beta}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"projection threshold must be in [0, 1], got {self.eta}")


@dataclass
class DesignField:
    """Multi-level refinement variables, one 2D array (ny, nx) per level."""

    levels: list[np.ndarray]
    x_min: float = X_MIN_DEFAULT

    @classmethod
    def homogeneous(cls, h: QuadtreeHierarchy, value: float,
                    x_min: float = X_MIN_DEFAULT) -> "DesignField":
        levels = [np.full((ny, nx), float(value)) for nx, ny in h.level_res]
        return cls(levels=levels, x_min=x_min)

    @classmethod
    def from_flat(cls, h: QuadtreeHierarchy, flat: np.ndarray,
                  x_min: float = X_MIN_DEFAULT) -> "DesignField":
        levels = []
        for k, (nx, ny) in enumerate(h.level_res, start=1):
            lo, hi = h.level_offsets[k - 1], h.level_offsets[k]
            levels.append(np.asarray(flat[lo:hi], dtype=float).reshape(ny, nx))
        return cls(levels=levels, x_min=x_min)

    def flat(self) -> np.ndarray:
        return np.concatenate([lv.ravel() for lv in self.levels])

    def copy(self) -> "DesignField":
        return DesignField([lv.copy() for lv in self.levels], x_min=self.x_min)

    def clip_to_bounds(self):
        for lv in self.levels:
            np.clip(lv, self.x_min, 1.0, out=lv)


def heaviside_project(x, beta: float, eta: float = 0.5):
    """tanh projection; fixes 0 -> 0 and 1 -> 1, strictly increasing."""
    x = np.asarray(x, dtype=float)
    denom = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return (np.tanh(beta * eta) + np.tanh(beta * (x - eta))) / denom


def heaviside_derivative(x, beta: float, eta: float = 0.5):
    """Elementwise derivative of :func:`heaviside_project`."""
    x = np.asarray(x, dtype=float)
    denom = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return beta / np.cosh(beta * (x - eta)) ** 2 / denom


def exact_min_filter_flat(xf: np.ndarray, table: DependencyTable) -> np.ndarray:
    """Per cell: min over the cell's own value and its dependency values."""
    vals = xf[table.S.indices]
    return np.minimum.reduceat(vals, table.S.indptr[:-1])


def smooth_min_filter_flat(xf: np.ndarray, table: DependencyTable,
                           p_n: float = -16.0) -> np.ndarray:
    """Normalized p-norm surrogate of :func:`exact_min_filter_flat`."""
    if p_n >= 0:
        raise ValueError(f"p-norm exponent must be negative, got {p_n}")
    if np.any(np.asarray(xf) <= 0):
        raise ValueError("smooth min filter requires strictly positive arguments")
    a = np.maximum(xf, PNORM_FLOOR)
    mean_pow = (table.S @ (a ** p_n)) / table.arg_counts
    return mean_pow ** (1.0 / p_n)


def smooth_min_vjp_flat(xf: np.ndarray, table: DependencyTable, p_n: float,
                        g_out: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of the smooth min filter (adjoint direction)."""
    a = np.maximum(xf, PNORM_FLOOR)
    mean_pow = (table.S @ (a ** p_n)) / table.arg_counts
    w = g_out * mean_pow ** (1.0 / p_n - 1.0) / table.arg_counts
    g_in = a ** (p_n - 1.0) * (table.S.T @ w)
    g_in[xf < PNORM_FLOOR] = 0.0
    return g_in


def exact_min_filter(x: DesignField, table: DependencyTable) -> DesignField:
    out = exact_min_filter_flat(x.flat(), table)
    return DesignField.from_flat(table.hierarchy, out, x_min=x.x_min)


def smooth_min_filter(x: DesignField, table: DependencyTable,
                      p_n: float = -16.0) -> DesignField:
    out = smooth_min_filter_flat(x.flat(), table, p_n)
    return DesignField.from_flat(table.hierarchy, out, x_min=x.x_min)


def filter_chain(x: DesignField, params: FilterParams,
                 table: DependencyTable) -> tuple[DesignField, DesignField]:
    """Projection followed by the smooth min filter; returns (xbar, xtilde)."""
    h = table.hierarchy
    xbar_flat = heaviside_project(x.flat(), params.beta, params.eta)
    xtilde_flat = smooth_min_filter_flat(np.maximum(xbar_flat, PNORM_FLOOR),
                                         table, params.p_n)
    xbar = DesignField.from_flat(h, xbar_flat, x_min=x.x_min)
    xtilde = DesignField.from_flat(h, xtilde_flat, x_min=x.x_min)
    return xbar, xtilde
