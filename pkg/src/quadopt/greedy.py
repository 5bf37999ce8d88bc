"""Greedy discrete baseline: alternating strain-energy-driven refinement
(odd iterations) and coarsening (even iterations) of a binary quadtree.

Only the unbalanced dependency rule applies: a cell may be refined exactly
when its parent is refined.  Volume is steered toward the target in small
steps (+0.4% / -0.1% of the domain by default).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fea
from .filters import DesignField
from .hierarchy import QuadtreeHierarchy
from .mapping import TransformStack


class InfeasibleVolumeError(ValueError):
    """Volume target below what the fixed coarse frame already uses."""


@dataclass
class BinaryQuadtree:
    """Boolean refinement flags per level; a cell exists iff its parent is
    refined (level-1 cells always exist)."""

    hierarchy: QuadtreeHierarchy
    refined: list[np.ndarray]

    @classmethod
    def unrefined(cls, h: QuadtreeHierarchy) -> "BinaryQuadtree":
        return cls(hierarchy=h,
                   refined=[np.zeros((ny, nx), dtype=bool) for nx, ny in h.level_res])

    def copy(self) -> "BinaryQuadtree":
        return BinaryQuadtree(self.hierarchy, [r.copy() for r in self.refined])

    def exists(self, k: int) -> np.ndarray:
        """Cells on level k created by their parents' refinement."""
        if k == 1:
            return np.ones_like(self.refined[0], dtype=bool)
        return np.repeat(np.repeat(self.refined[k - 2], 2, axis=0), 2, axis=1)

    def is_valid(self) -> bool:
        for k in range(2, self.hierarchy.kbar + 1):
            if np.any(self.refined[k - 1] & ~self.exists(k)):
                return False
        return True

    def as_design(self, x_min: float = 0.0) -> DesignField:
        levels = [np.where(r, 1.0, x_min) for r in self.refined]
        return DesignField(levels=levels, x_min=x_min)

    def density(self, ts: TransformStack) -> np.ndarray:
        return ts.apply(self.as_design())

    def volume(self, ts: TransformStack) -> float:
        """Mapped volume including the fixed coarse frame."""
        flat = np.concatenate([r.ravel().astype(float) for r in self.refined])
        return ts.volume_of(flat)

    def fingerprint(self) -> bytes:
        return b"".join(r.tobytes() for r in self.refined)


@dataclass
class GreedyResult:
    tree: BinaryQuadtree
    iterations: int
    compliance: float
    history: list = field(default_factory=list)  # (iteration, volume_fraction, c)


def _cell_energy_means(h: QuadtreeHierarchy, energies: np.ndarray) -> list[np.ndarray]:
    """Block-averaged strain energy for every cell of every level."""
    out = []
    for k in range(1, h.kbar + 1):
        nx, ny = h.level_resolution(k)
        L = h.cell_size(k)
        out.append(energies.reshape(ny, L, nx, L).mean(axis=(1, 3)))
    return out


def greedy_optimize(bundle, volfrac: float, refine_step: float = 0.004,
                    coarsen_step: float = 0.001, solver: str = "direct",
                    max_iters: int = 5000) -> GreedyResult:
    """Alternate refinement and coarsening until the volume target is met
    and the refinement selection repeats (or comes up empty)."""
    if bundle.mode == "balanced":
        raise ValueError("greedy baseline only supports the unbalanced setting")
    h: QuadtreeHierarchy = bundle.hierarchy
    ts: TransformStack = bundle.ts
    model = bundle.model
    ntot = h.nelx * h.nely
    target = volfrac * ntot
    tree = BinaryQuadtree.unrefined(h)
    vol = tree.volume(ts)
    if target < vol - 1e-9:
        raise InfeasibleVolumeError(
            f"volume target {volfrac:.4f} below coarse-frame fraction "
            f"{vol / ntot:.4f}")

    counts = ts.paint_counts
    history = []
    prev_selection: frozenset | None = None
    last_added = 0.0
    it = 0
    compliance = float("nan")
    while it < max_iters:
        it += 1
        rho = tree.density(ts)
        res = fea.assemble_and_solve(model, rho, solver=solver)
        compliance = res.c
        history.append((it, vol / ntot, compliance))
        element_means = _cell_energy_means(
            h, fea.element_energies(model, res.U, rho))

        if it % 2 == 1:  # refinement
            candidates = []
            for k in range(1, h.kbar + 1):
                mask = tree.exists(k) & ~tree.refined[k - 1]
                for iy, ix in zip(*np.nonzero(mask)):
                    g = h.gid(k, ix, iy)
                    if counts[g] > 0:
                        candidates.append((element_means[k - 1][iy, ix], k, g))
            candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
            selected = []
            added = 0
            for _, k, g in candidates:
                if added >= refine_step * ntot:
                    break
                if vol + counts[g] > target + 1e-9:
                    continue        # too coarse to fit; try a finer cell
                _, ix, iy = h.gid_to_cell(g)
                tree.refined[k - 1][iy, ix] = True
                vol += counts[g]
                added += counts[g]
                selected.append(g)
            selection = frozenset(selected)
            if not selection or selection == prev_selection:
                break
            prev_selection = selection
            last_added = added
        else:  # coarsening
            candidates = []
            for k in range(1, h.kbar + 1):
                mask = tree.refined[k - 1].copy()
                if k < h.kbar:
                    child = tree.refined[k]
                    deeper = (child.reshape(child.shape[0] // 2, 2,
                                            child.shape[1] // 2, 2)
                              .any(axis=(1, 3)))
                    mask &= ~deeper
                for iy, ix in zip(*np.nonzero(mask)):
                    g = h.gid(k, ix, iy)
                    candidates.append((element_means[k - 1][iy, ix], k, g))
            candidates.sort(key=lambda t: (t[0], t[1], t[2]))
            removed = 0
            for _, k, g in candidates:
                if removed + counts[g] >= coarsen_step * ntot:
                    break
                if removed + counts[g] >= last_added:
                    break           # keep net progress toward the target
                _, ix, iy = h.gid_to_cell(g)
                tree.refined[k - 1][iy, ix] = False
                vol -= counts[g]
                removed += counts[g]

    return GreedyResult(tree=tree, iterations=it, compliance=compliance,
                        history=history)
