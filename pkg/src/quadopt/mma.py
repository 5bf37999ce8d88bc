"""Method of moving asymptotes, specialized to a single volume constraint.

Standard separable approximation with adaptive asymptotes; the subproblem
is solved in its dual form by bisecting the single multiplier.  Like the
OC update, the multiplier is bisected against the true mapped volume so
every accepted design stays feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import DesignField, FilterParams
from .hierarchy import DependencyTable
from .mapping import TransformStack

ASYINIT = 0.5
ASYDECR = 0.7
ASYINCR = 1.2
ALBEFA = 0.1


@dataclass
class MMAState:
    iteration: int
    low: np.ndarray
    upp: np.ndarray
    xold1: np.ndarray | None
    xold2: np.ndarray | None

    @classmethod
    def fresh(cls, n: int) -> "MMAState":
        return cls(iteration=0, low=np.zeros(n), upp=np.ones(n),
                   xold1=None, xold2=None)


def mma_update(x: DesignField, g_c: DesignField, g_v: DesignField, target: float,
               state: MMAState, ts: TransformStack, table: DependencyTable,
               params: FilterParams, move: float = 0.2
               ) -> tuple[DesignField, MMAState]:
    from .optimizer import mapped_volume_fraction  # local to avoid a cycle

    h = table.hierarchy
    xf = x.flat()
    dc = g_c.flat()
    dv = g_v.flat() / ts.n_elements  # gradient of the volume *fraction*
    active = ts.active_cells
    xmin, xmax = x.x_min, 1.0
    rng = xmax - xmin

    state.iteration += 1
    if state.iteration <= 2 or state.xold2 is None:
        low = xf - ASYINIT * rng
        upp = xf + ASYINIT * rng
    else:
        osc = (xf - state.xold1) * (state.xold1 - state.xold2)
        fac = np.ones_like(xf)
        fac[osc > 0] = ASYINCR
        fac[osc < 0] = ASYDECR
        low = xf - fac * (state.xold1 - state.low)
        upp = xf + fac * (state.upp - state.xold1)
        low = np.clip(low, xf - 10.0 * rng, xf - 0.01 * rng)
        upp = np.clip(upp, xf + 0.01 * rng, xf + 10.0 * rng)

    alpha = np.maximum.reduce([np.full_like(xf, xmin), low + ALBEFA * (xf - low),
                               xf - move])
    beta_b = np.minimum.reduce([np.full_like(xf, xmax), upp - ALBEFA * (upp - xf),
                                xf + move])
    beta_b = np.maximum(beta_b, alpha)

    ul = (upp - xf) ** 2
    lx = (xf - low) ** 2
    eps = 1e-5 / (upp - low)
    p0 = ul * (np.maximum(dc, 0.0) + eps)
    q0 = lx * (np.maximum(-dc, 0.0) + eps)
    p1 = ul * np.maximum(dv, 0.0)
    q1 = lx * np.maximum(-dv, 0.0)

    def primal(lam: float) -> np.ndarray:
        sp = np.sqrt(p0 + lam * p1)
        sq = np.sqrt(q0 + lam * q1)
        xn = (low * sp + upp * sq) / (sp + sq)
        xn = np.clip(xn, alpha, beta_b)
        xn[~active] = xmin
        return xn

    def vf(xn: np.ndarray) -> float:
        return mapped_volume_fraction(ts, table, xn, params)

    l1, l2 = 0.0, 1.0
    xn = primal(l1)
    if vf(xn) > target:
        while vf(primal(l2)) > target:
            l2 *= 10.0
            if l2 > 1e12:
                raise RuntimeError("MMA multiplier search failed to bracket "
                                   "the volume constraint")
        for _ in range(128):
            lam = 0.5 * (l1 + l2)
            xn = primal(lam)
            v = vf(xn)
            if abs(v - target) <= 1e-4 * target:
                break
            if v > target:
                l1 = lam
            else:
                l2 = lam

    state.xold2 = state.xold1
    state.xold1 = xf.copy()
    state.low = low
    state.upp = upp
    return DesignField.from_flat(h, xn, x_min=x.x_min), state
