"""Quadtree level arithmetic and refinement dependency tables.

Refinement levels are numbered 1..kbar; level k has a grid of
(2^(k-1)*n0x, 2^(k-1)*n0y) cells.  Formula-facing helpers (``parent_index``,
``DependencyTable.deps_for``) use 1-based cell indices; everything stored in
arrays is 0-based row-major, with flat cell ids ``iy * nx + ix`` and a global
id space that concatenates the levels in order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse


class InvalidLevelError(ValueError):
    """Refinement level outside 1..kbar."""


# Offsets of the 8-neighbourhood used by the balanced dependency closure.
_NEIGHBOUR_OFFSETS = (
    (-1, -1), (0, -1), (1, -1),
    (-1, 0), (1, 0),
    (-1, 1), (0, 1), (1, 1),
)

DEPENDENCY_MODES = ("none", "unbalanced", "balanced")


class QuadtreeHierarchy:
    """Grid resolutions and index arithmetic for a multi-level quadtree.

    Each coarse cell maps to a 2^m x 2^m block of finite elements, so the
    element grid is (2^m * n0x, 2^m * n0y).  The deepest refinement level is
    capped at m - 2, which keeps refined edges from merging into fully solid
    blocks.
    """

    def __init__(self, n0x: int, n0y: int, m: int, kbar: int | None = None):
        if n0x < 1 or n0y < 1:
            raise ValueError(f"coarse resolution must be positive, got ({n0x}, {n0y})")
        if m < 3:
            raise ValueError(f"block exponent m must be >= 3, got {m}")
        if kbar is None:
            kbar = m - 2
        if not 1 <= kbar <= m - 2:
            raise ValueError(f"kbar must be in 1..{m - 2}, got {kbar}")
        self.n0x = int(n0x)
        self.n0y = int(n0y)
        self.m = int(m)
        self.kbar = int(kbar)
        self.nelx = (1 << m) * n0x
        self.nely = (1 << m) * n0y
        # level_res[k-1] = resolution of level k
        self.level_res = [(2 ** (k - 1) * n0x, 2 ** (k - 1) * n0y)
                          for k in range(1, kbar + 1)]
        ncells = [nx * ny for nx, ny in self.level_res]
        self.level_offsets = np.concatenate([[0], np.cumsum(ncells)]).astype(np.int64)
        self.total_cells = int(self.level_offsets[-1])

    def __repr__(self):
        return (f"QuadtreeHierarchy(n0=({self.n0x},{self.n0y}), m={self.m}, "
                f"kbar={self.kbar}, elements={self.nelx}x{self.nely})")

    def _check_level(self, k: int):
        if not 1 <= k <= self.kbar:
            raise InvalidLevelError(f"level {k} outside 1..{self.kbar}")

    def level_resolution(self, k: int) -> tuple[int, int]:
        """Cell resolution (nx, ny) of level k."""
        self._check_level(k)
        return self.level_res[k - 1]

    def cell_size(self, k: int) -> int:
        """Side length of a level-k cell in finite elements."""
        self._check_level(k)
        return 1 << (self.m - k + 1)

    def gid(self, k: int, ix: int, iy: int) -> int:
        """Global flat id of cell (ix, iy) on level k (0-based indices)."""
        nx, ny = self.level_resolution(k)
        if not (0 <= ix < nx and 0 <= iy < ny):
            raise ValueError(f"cell ({ix},{iy}) outside level-{k} grid {nx}x{ny}")
        return int(self.level_offsets[k - 1]) + iy * nx + ix

    def gid_to_cell(self, g: int) -> tuple[int, int, int]:
        """Inverse of :meth:`gid`: (level, ix, iy) for a global id."""
        k = int(np.searchsorted(self.level_offsets, g, side="right"))
        rel = g - int(self.level_offsets[k - 1])
        nx, _ = self.level_res[k - 1]
        return k, rel % nx, rel // nx

    def cell_block(self, k: int, ix: int, iy: int) -> tuple[int, int, int]:
        """Element-grid origin and side length (x0, y0, L) of a cell."""
        L = self.cell_size(k)
        nx, ny = self.level_resolution(k)
        if not (0 <= ix < nx and 0 <= iy < ny):
            raise ValueError(f"cell ({ix},{iy}) outside level-{k} grid {nx}x{ny}")
        return ix * L, iy * L, L


def parent_index(i: int) -> int:
    """Parent cell index along one axis, 1-based: floor((i+1)/2)."""
    if i < 1:
        raise ValueError(f"1-based cell index must be >= 1, got {i}")
    return (i + 1) // 2


@dataclass
class DependencyTable:
    """Per-cell ancestor closure used by the refinement filters.

    ``deps[g]`` lists the global ids every cell g depends on, nearest level
    first, no duplicates.  ``S`` is the row-selector matrix whose row g picks
    the cell itself plus its dependencies; ``arg_counts[g]`` is the row size
    (the N that normalizes the p-norm smooth minimum).
    """

    hierarchy: QuadtreeHierarchy
    mode: str
    deps: list[np.ndarray]
    S: sparse.csr_matrix
    arg_counts: np.ndarray

    def deps_for(self, k: int, i: int, j: int) -> list[tuple[int, tuple[int, int]]]:
        """Dependency list of cell (i, j) on level k, 1-based indices."""
        g = self.hierarchy.gid(k, i - 1, j - 1)
        out = []
        for d in self.deps[g]:
            lvl, ix, iy = self.hierarchy.gid_to_cell(int(d))
            out.append((lvl, (ix + 1, iy + 1)))
        return out


def _layer_expand(cells, h: QuadtreeHierarchy, level: int, balanced: bool):
    """Parents (plus their in-range neighbours if balanced) of a cell layer."""
    nx, ny = h.level_resolution(level)
    seen = set()
    out = []
    for cx, cy in cells:
        px, py = cx // 2, cy // 2
        cand = [(px, py)]
        if balanced:
            for dx, dy in _NEIGHBOUR_OFFSETS:
                qx, qy = px + dx, py + dy
                if 0 <= qx < nx and 0 <= qy < ny:
                    cand.append((qx, qy))
        for c in cand:
            if c not in seen:
                seen.add(c)
                out.append(c)
    return out


def build_dependency_table(h: QuadtreeHierarchy, mode: str = "unbalanced") -> DependencyTable:
    """Precompute the flattened, deduplicated ancestor closure of every cell.

    ``unbalanced`` stores the plain parent chain; ``balanced`` additionally
    pulls in the parents' in-range 8-neighbourhoods, recursively.  ``none``
    yields empty lists (no refinement coupling).
    """
    if mode not in DEPENDENCY_MODES:
        raise ValueError(f"mode must be one of {DEPENDENCY_MODES}, got {mode!r}")
    balanced = mode == "balanced"
    deps: list[np.ndarray] = [np.empty(0, dtype=np.int64) for _ in range(h.total_cells)]
    if mode != "none":
        for k in range(2, h.kbar + 1):
            nx, ny = h.level_resolution(k)
            for iy in range(ny):
                for ix in range(nx):
                    chain = []
                    layer = [(ix, iy)]
                    for lvl in range(k - 1, 0, -1):
                        layer = _layer_expand(layer, h, lvl, balanced)
                        chain.extend(h.gid(lvl, cx, cy) for cx, cy in layer)
                    deps[h.gid(k, ix, iy)] = np.asarray(chain, dtype=np.int64)

    sizes = np.array([1 + len(d) for d in deps], dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(sizes)])
    indices = np.empty(indptr[-1], dtype=np.int64)
    for g, d in enumerate(deps):
        indices[indptr[g]] = g
        indices[indptr[g] + 1:indptr[g + 1]] = d
    S = sparse.csr_matrix(
        (np.ones(len(indices)), indices, indptr),
        shape=(h.total_cells, h.total_cells),
    )
    return DependencyTable(hierarchy=h, mode=mode, deps=deps, S=S, arg_counts=sizes)
