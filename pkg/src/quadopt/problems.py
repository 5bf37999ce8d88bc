"""Benchmark problem definitions and domain ingestion.

A ProblemSpec describes supports and loads in physical terms (edges and
fractions along them); they are resolved to node dofs when the finite
element model is built.  Masked problems carve a curved domain out of the
bounding box via passive solid/void elements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fea
from .fea import FEModel
from .greedy import BinaryQuadtree
from .hierarchy import QuadtreeHierarchy, build_dependency_table
from .mapping import TransformStack, build_transforms, read_mask_pgm

_EDGES = ("left", "right", "bottom", "top")
_COMPONENTS = ("x", "y", "both")


@dataclass
class Support:
    """Fix displacement components of all nodes on (a span of) an edge."""

    edge: str
    component: str = "both"
    span: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.edge not in _EDGES:
            raise ValueError(f"edge must be one of {_EDGES}, got {self.edge!r}")
        if self.component not in _COMPONENTS:
            raise ValueError(f"component must be one of {_COMPONENTS}")


@dataclass
class PointSupport:
    """Fix displacement components of the node nearest a fractional position."""

    x_frac: float
    y_frac: float
    component: str = "both"

    def __post_init__(self):
        if self.component not in _COMPONENTS:
            raise ValueError(f"component must be one of {_COMPONENTS}")


@dataclass
class PointLoad:
    """Nodal force at the node nearest a fractional position."""

    x_frac: float
    y_frac: float
    fx: float = 0.0
    fy: float = 0.0


@dataclass
class ProblemSpec:
    """Hierarchy parameters plus boundary conditions for one benchmark."""

    name: str
    n0x: int
    n0y: int
    m: int
    volfrac: float
    supports: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    mask: np.ndarray | None = None

    def __post_init__(self):
        if not self.loads:
            raise ValueError("problem needs at least one load")
        if not self.supports:
            raise ValueError("problem needs at least one support")
        if not 0.0 < self.volfrac < 1.0:
            raise ValueError(f"volume fraction must be in (0, 1), got {self.volfrac}")


@dataclass
class Bundle:
    """A problem assembled for one (mode, kbar) setting."""

    spec: ProblemSpec
    mode: str
    hierarchy: QuadtreeHierarchy
    table: object
    ts: TransformStack
    model: FEModel


def _component_dofs(node: int, component: str) -> list[int]:
    if component == "x":
        return [2 * node]
    if component == "y":
        return [2 * node + 1]
    return [2 * node, 2 * node + 1]


def _edge_nodes(h: QuadtreeHierarchy, edge: str, span: tuple[float, float]):
    nelx, nely = h.nelx, h.nely
    f0, f1 = min(span), max(span)
    if edge in ("left", "right"):
        ix = 0 if edge == "left" else nelx
        lo, hi = int(round(f0 * nely)), int(round(f1 * nely))
        return [(ix, iy) for iy in range(lo, hi + 1)]
    iy = 0 if edge == "bottom" else nely
    lo, hi = int(round(f0 * nelx)), int(round(f1 * nelx))
    return [(ix, iy) for ix in range(lo, hi + 1)]


def resolve_boundary(spec: ProblemSpec, h: QuadtreeHierarchy,
                     model_nodes=None) -> tuple[np.ndarray, np.ndarray]:
    """Fixed dof array and load vector for the spec on a given hierarchy."""
    nely1 = h.nely + 1
    ndof = 2 * (h.nelx + 1) * nely1

    def node(ix, iy):
        return ix * nely1 + iy

    fixed = []
    for sup in spec.supports:
        if isinstance(sup, Support):
            for ix, iy in _edge_nodes(h, sup.edge, sup.span):
                fixed.extend(_component_dofs(node(ix, iy), sup.component))
        elif isinstance(sup, PointSupport):
            ix = int(round(sup.x_frac * h.nelx))
            iy = int(round(sup.y_frac * h.nely))
            fixed.extend(_component_dofs(node(ix, iy), sup.component))
        else:
            raise TypeError(f"unsupported support spec {sup!r}")

    F = np.zeros(ndof)
    for load in spec.loads:
        ix = int(round(load.x_frac * h.nelx))
        iy = int(round(load.y_frac * h.nely))
        F[2 * node(ix, iy)] += load.fx
        F[2 * node(ix, iy) + 1] += load.fy
    if np.linalg.norm(F) == 0.0:
        raise ValueError("loads sum to zero force everywhere")
    return np.asarray(sorted(set(fixed)), dtype=np.int64), F


def build_problem(spec: ProblemSpec, mode: str = "unbalanced",
                  kbar: int | None = None, E0: float = 1.0, Emin: float = 1e-9,
                  nu: float = 0.3, p: float = 3.0) -> Bundle:
    """Assemble hierarchy, dependency table, transforms, and FE model."""
    h = QuadtreeHierarchy(spec.n0x, spec.n0y, spec.m, kbar=kbar)
    table = build_dependency_table(h, mode=mode)
    ts = build_transforms(h, domain_mask=spec.mask)
    fixed, F = resolve_boundary(spec, h)
    model = FEModel(nelx=h.nelx, nely=h.nely, fixed_dofs=fixed, F=F,
                    E0=E0, Emin=Emin, nu=nu, p=p)
    return Bundle(spec=spec, mode=mode, hierarchy=h, table=table, ts=ts,
                  model=model)


def make_cantilever(n0: tuple[int, int] = (8, 4), m: int = 5,
                    volfrac: float = 0.4) -> ProblemSpec:
    """Left edge fully fixed, unit downward load at mid-height of the right edge."""
    return ProblemSpec(
        name="cantilever", n0x=n0[0], n0y=n0[1], m=m, volfrac=volfrac,
        supports=[Support("left", "both")],
        loads=[PointLoad(1.0, 0.5, 0.0, -1.0)],
    )


def make_mbb(n0: tuple[int, int] = (12, 4), m: int = 5,
             volfrac: float = 0.3) -> ProblemSpec:
    """Half MBB beam: symmetry rollers on the left edge, downward load at the
    top-left corner, vertical roller at the bottom-right corner."""
    return ProblemSpec(
        name="mbb", n0x=n0[0], n0y=n0[1], m=m, volfrac=volfrac,
        supports=[Support("left", "x"), PointSupport(1.0, 0.0, "y")],
        loads=[PointLoad(0.0, 1.0, 0.0, -1.0)],
    )


def make_masked(mask, n0: tuple[int, int], m: int, supports: list, loads: list,
                volfrac: float | None = None, name: str = "masked") -> ProblemSpec:
    """Curved-domain problem; mask is a bool array or a P5 PGM path."""
    h = QuadtreeHierarchy(n0[0], n0[1], m)
    if isinstance(mask, (str, bytes)) or hasattr(mask, "__fspath__"):
        mask = read_mask_pgm(mask, h)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (h.nely, h.nelx):
        raise ValueError(f"mask shape {mask.shape} does not match element grid "
                         f"{(h.nely, h.nelx)}")
    if not mask.any():
        raise ValueError("mask has no interior elements")
    if volfrac is None:
        spec = ProblemSpec(name=name, n0x=n0[0], n0y=n0[1], m=m, volfrac=0.5,
                           supports=supports, loads=loads, mask=mask)
        bundle = build_problem(spec)
        _, vf = uniform_reference(bundle, min(2, bundle.hierarchy.kbar))
        spec.volfrac = vf
        return spec
    return ProblemSpec(name=name, n0x=n0[0], n0y=n0[1], m=m, volfrac=volfrac,
                       supports=supports, loads=loads, mask=mask)


def elliptical_mask(h: QuadtreeHierarchy) -> np.ndarray:
    """Ellipse inscribed in the bounding box (touches all four edges)."""
    ex, ey = np.meshgrid(np.arange(h.nelx) + 0.5, np.arange(h.nely) + 0.5)
    rx, ry = h.nelx / 2.0, h.nely / 2.0
    return ((ex - rx) / rx) ** 2 + ((ey - ry) / ry) ** 2 <= 1.0


def make_bracket(n0: tuple[int, int] = (6, 4), m: int = 5,
                 volfrac: float | None = None) -> ProblemSpec:
    """Curved elliptical domain fixed at its left tip, loaded at its right tip."""
    h = QuadtreeHierarchy(n0[0], n0[1], m)
    mask = elliptical_mask(h)
    # contact strip height where the ellipse touches the left edge
    touch = np.nonzero(mask[:, 0])[0]
    f0 = touch.min() / h.nely
    f1 = (touch.max() + 1) / h.nely
    return make_masked(
        mask, n0, m,
        supports=[Support("left", "both", (f0, f1))],
        loads=[PointLoad(1.0, 0.5, 0.0, -1.0)],
        volfrac=volfrac, name="bracket",
    )


def uniform_reference(bundle: Bundle, r: int) -> tuple[BinaryQuadtree, float]:
    """Uniformly refine all cells through level r; returns (tree, volume fraction)."""
    h = bundle.hierarchy
    if not 0 <= r <= h.kbar:
        raise ValueError(f"refinement level {r} outside 0..{h.kbar}")
    refined = [np.full((ny, nx), k <= r, dtype=bool)
               for k, (nx, ny) in enumerate(h.level_res, start=1)]
    tree = BinaryQuadtree(hierarchy=h, refined=refined)
    rho = tree.density(bundle.ts)
    return tree, fea.volume_fraction(rho)


@dataclass
class SweepResult:
    positions: np.ndarray
    compliances: np.ndarray

    @property
    def spread(self) -> float:
        return float(self.compliances.max() - self.compliances.min())

    @property
    def std(self) -> float:
        return float(self.compliances.std())


def robustness_sweep(bundle: Bundle, rho: np.ndarray, n_positions: int = 101,
                     magnitude: float | None = None) -> SweepResult:
    """Compliance under a small downward load moving along the top edge.

    The perturbation load acts alone (design load removed); the fixation is
    unchanged.  Default magnitude is one tenth of the largest nodal design
    force.
    """
    model = bundle.model
    if magnitude is None:
        magnitude = 0.1 * float(np.abs(model.F).max())
    positions = np.linspace(0.0, 1.0, n_positions)
    compliances = np.empty(n_positions)
    if magnitude == 0.0:
        compliances[:] = 0.0
        return SweepResult(positions=positions, compliances=compliances)
    factor = fea.factorize(model, rho)
    nely1 = model.nely + 1
    for i, t in enumerate(positions):
        ix = int(round(t * model.nelx))
        F = np.zeros(model.ndof)
        F[2 * (ix * nely1 + model.nely) + 1] = -magnitude
        res = fea.solve_with_factor(model, factor, F)
        compliances[i] = res.c
    return SweepResult(positions=positions, compliances=compliances)
