"""Outer optimization loop: design updates, beta continuation, convergence.

Each iteration runs projection -> smooth min filter -> density mapping ->
FE solve -> adjoint gradients -> design update.  The volume constraint is
enforced on the true mapped volume (through the whole chain), not a
linearization, by bisecting the update's Lagrange multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fea, filters, problems, sensitivity
from .filters import DesignField, FilterParams, PNORM_FLOOR
from .greedy import InfeasibleVolumeError
from .hierarchy import DependencyTable, QuadtreeHierarchy
from .mapping import TransformStack
from .problems import Bundle, ProblemSpec

FILTER_MODES = ("none", "unbalanced", "balanced")


@dataclass
class RunConfig:
    """Knobs of one optimization run."""

    volfrac: float | None = None       # None: take the problem's target
    filter_mode: str = "unbalanced"    # none | unbalanced | balanced
    kbar: int | None = None
    optimizer: str = "oc"              # oc | mma
    max_iters: int = 400
    tol: float = 1e-4
    beta_start: float = 1.0
    beta_max: float = 32.0
    beta_every: int = 60
    p_n: float = -16.0
    eta: float = 0.5
    move: float = 0.2
    damping: float = 0.5
    x_min: float = 1e-3
    solver: str = "direct"
    init_value: float | None = None    # None: bisect a feasible homogeneous value

    def __post_init__(self):
        if self.filter_mode not in FILTER_MODES:
            raise ValueError(f"filter_mode must be one of {FILTER_MODES}")
        if self.optimizer not in ("oc", "mma"):
            raise ValueError("optimizer must be 'oc' or 'mma'")

    def beta_at(self, iteration: int) -> float:
        stage = (iteration - 1) // self.beta_every
        return min(self.beta_max, self.beta_start * 2.0 ** stage)


@dataclass
class RunRecord:
    iteration: int
    compliance: float
    volume: float
    sharpness: float
    change: float
    beta: float


@dataclass
class OptimizerState:
    iteration: int = 0
    beta: float = 1.0
    x: DesignField | None = None
    history: list = field(default_factory=list)  # RunRecord per iteration
    termination: str = "running"


def mapped_volume_fraction(ts: TransformStack, table: DependencyTable,
                           x_flat: np.ndarray, params: FilterParams) -> float:
    """Volume fraction of the density mapped from raw design variables."""
    xbar = np.maximum(filters.heaviside_project(x_flat, params.beta, params.eta),
                      PNORM_FLOOR)
    xt = filters.smooth_min_filter_flat(xbar, table, params.p_n)
    return ts.volume_of(xt) / ts.n_elements


def initialize_design(config: RunConfig, h: QuadtreeHierarchy,
                      table: DependencyTable, ts: TransformStack,
                      target: float) -> DesignField:
    """Homogeneous start whose mapped volume fraction meets the target.

    Bisects the homogeneous value through the full chain at the starting
    beta; inactive (fully passive) cells are pinned at x_min.
    """
    params = FilterParams(p_n=config.p_n, beta=config.beta_start, eta=config.eta)

    def vf_of(v: float) -> float:
        x = np.full(h.total_cells, v)
        x[~ts.active_cells] = config.x_min
        return mapped_volume_fraction(ts, table, x, params)

    lo, hi = config.x_min, 1.0
    if vf_of(lo) > target + 1e-9:
        raise InfeasibleVolumeError(
            f"volume target {target:.4f} below the fixed-frame fraction "
            f"{vf_of(lo):.4f}")
    if config.init_value is not None:
        v = config.init_value
    elif vf_of(hi) <= target:
        v = hi
    else:
        for _ in range(60):
            v = 0.5 * (lo + hi)
            if vf_of(v) > target:
                hi = v
            else:
                lo = v
        v = lo
    flat = np.full(h.total_cells, v)
    flat[~ts.active_cells] = config.x_min
    return DesignField.from_flat(h, flat, x_min=config.x_min)


def oc_update(x: DesignField, g_c: DesignField, g_v: DesignField, target: float,
              ts: TransformStack, table: DependencyTable, params: FilterParams,
              move: float = 0.2, damping: float = 0.5) -> DesignField:
    """Optimality-criteria step with the multiplier bisected on the true
    mapped volume fraction."""
    h = table.hierarchy
    xf = x.flat()
    gc = g_c.flat()
    gv = g_v.flat()
    active = ts.active_cells
    lower = np.maximum(x.x_min, xf - move)
    upper = np.minimum(1.0, xf + move)
    num = np.maximum(-gc, 0.0)
    den = np.maximum(gv, 1e-12)

    def candidate(lam: float) -> np.ndarray:
        xn = np.clip(xf * (num / (lam * den)) ** damping, lower, upper)
        xn[~active] = x.x_min
        return xn

    def vf(xn: np.ndarray) -> float:
        return mapped_volume_fraction(ts, table, xn, params)

    l1, l2 = 1e-9, 1e9
    xn = candidate(l1)
    if vf(xn) <= target:          # constraint slack even at the loosest step
        return DesignField.from_flat(h, xn, x_min=x.x_min)
    if vf(candidate(l2)) > target:
        raise RuntimeError(
            "OC multiplier bisection not bracketing: volume cannot be met "
            f"(target {target:.4f})")
    for _ in range(128):
        lam = np.sqrt(l1 * l2)
        xn = candidate(lam)
        v = vf(xn)
        if abs(v - target) <= 1e-4 * target:
            break
        if v > target:
            l1 = lam
        else:
            l2 = lam
    return DesignField.from_flat(h, xn, x_min=x.x_min)


def run(problem: ProblemSpec | Bundle, config: RunConfig,
        callback=None) -> tuple[DesignField, np.ndarray, OptimizerState]:
    """Optimize a problem; returns (design, density, state with history)."""
    if isinstance(problem, Bundle):
        bundle = problem
    else:
        bundle = problems.build_problem(problem, mode=config.filter_mode,
                                        kbar=config.kbar)
    h, table, ts, model = bundle.hierarchy, bundle.table, bundle.ts, bundle.model
    target = config.volfrac if config.volfrac is not None else bundle.spec.volfrac

    x = initialize_design(config, h, table, ts, target)
    state = OptimizerState(x=x)
    mma_state = None
    if config.optimizer == "mma":
        from .mma import MMAState
        mma_state = MMAState.fresh(h.total_cells)

    rho = None
    for it in range(1, config.max_iters + 1):
        beta = config.beta_at(it)
        params = FilterParams(p_n=config.p_n, beta=beta, eta=config.eta)
        _, xt = filters.filter_chain(x, params, table)
        rho = ts.apply(xt)
        res = fea.assemble_and_solve(model, rho, solver=config.solver)
        vf = fea.volume_fraction(rho)
        s = fea.sharpness(rho, active=ts.active_elements)
        g_c, g_v = sensitivity.full_gradients(x, params, table, ts, model,
                                              res.U, rho)
        if config.optimizer == "oc":
            x_new = oc_update(x, g_c, g_v, target, ts, table, params,
                              move=config.move, damping=config.damping)
        else:
            from .mma import mma_update
            x_new, mma_state = mma_update(x, g_c, g_v, target, mma_state, ts,
                                          table, params, move=config.move)
        change = float(np.max(np.abs(x_new.flat() - x.flat())))
        record = RunRecord(iteration=it, compliance=res.c, volume=vf,
                           sharpness=s, change=change, beta=beta)
        state.history.append(record)
        state.iteration = it
        state.beta = beta
        x = x_new
        state.x = x
        if callback is not None:
            callback(record, x, rho)
        # Change-based termination only once the continuation has finished,
        # so an early beta stage cannot stop the run prematurely.
        if change < config.tol and beta >= config.beta_max:
            state.termination = "converged"
            break
    else:
        state.termination = "max_iters"

    params = FilterParams(p_n=config.p_n, beta=state.beta, eta=config.eta)
    _, xt = filters.filter_chain(x, params, table)
    rho = ts.apply(xt)
    return x, rho, state
