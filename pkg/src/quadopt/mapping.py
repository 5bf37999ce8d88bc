"""Element-assignment transforms: design variables -> element densities.

Level 0 is the fixed coarse frame: every coarse block paints its outer
1-element ring, so walls between blocks are two elements thick.  A refined
cell on level k >= 1 paints a plus-shaped cross, two elements thick, along
the cell midlines, restricted to the region inside the cell's 1-element
ring (which its ancestors paint).  All painted sets are pairwise disjoint,
so densities never exceed 1 for design values in [0, 1].

Element arrays are shaped (nely, nelx) with row 0 at the bottom of the
domain; flat element ids are ``ey * nelx + ex``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .filters import DesignField
from .hierarchy import QuadtreeHierarchy


def _plus_elements(x0: int, y0: int, L: int, nelx: int) -> np.ndarray:
    """Flat element ids of the 2-thick cross inside a cell's interior."""
    cx = x0 + L // 2  # midline columns are cx-1, cx; rows cy-1, cy
    cy = y0 + L // 2
    span = np.arange(x0 + 1, x0 + L - 1)  # interior, ring excluded
    ids = set()
    for col in (cx - 1, cx):
        for ey in range(y0 + 1, y0 + L - 1):
            ids.add(ey * nelx + col)
    for row in (cy - 1, cy):
        for ex in span:
            ids.add(row * nelx + int(ex))
    return np.fromiter(sorted(ids), dtype=np.int64)


@dataclass
class TransformStack:
    """Sparse per-cell element paint lists plus passive element handling.

    ``elem_ids[k-1]`` / ``src_ids[k-1]`` give, for level k, the painted flat
    element ids and the flat (level-local) cell id that paints each of them.
    ``base`` is the density contribution that never changes: the coarse
    frame and the passive solids.
    """

    hierarchy: QuadtreeHierarchy
    elem_ids: list[np.ndarray]
    src_ids: list[np.ndarray]
    paint_counts: np.ndarray          # per global cell id, elements painted
    base: np.ndarray                  # (nely, nelx) frame + passive solid
    passive_solid: np.ndarray         # bool (nely, nelx)
    passive_void: np.ndarray          # bool (nely, nelx)
    active_cells: np.ndarray          # bool per global cell id
    active_elements: np.ndarray       # bool (nely, nelx), not passive

    @property
    def n_elements(self) -> int:
        return self.hierarchy.nelx * self.hierarchy.nely

    def apply(self, xtilde: DesignField) -> np.ndarray:
        """Density field from filtered design values (passive applied last)."""
        h = self.hierarchy
        if len(xtilde.levels) != h.kbar:
            raise ValueError(
                f"expected {h.kbar} design levels, got {len(xtilde.levels)}")
        rho = self.base.copy().ravel()
        for k in range(1, h.kbar + 1):
            vals = xtilde.levels[k - 1].ravel()
            if np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12):
                raise ValueError("filtered design values must lie in [0, 1]")
            rho[self.elem_ids[k - 1]] = vals[self.src_ids[k - 1]]
        return rho.reshape(h.nely, h.nelx)

    def volume_of(self, xtilde_flat: np.ndarray) -> float:
        """Mapped volume (element count units) without forming the field."""
        return float(self.base.sum() + self.paint_counts @ xtilde_flat)

    def backproject(self, g_rho: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`apply`: per-cell sums of an element field."""
        h = self.hierarchy
        flat = np.asarray(g_rho).ravel()
        out = np.zeros(h.total_cells)
        for k in range(1, h.kbar + 1):
            lo = h.level_offsets[k - 1]
            nloc = h.level_offsets[k] - lo
            out[lo:lo + nloc] = np.bincount(
                self.src_ids[k - 1], weights=flat[self.elem_ids[k - 1]],
                minlength=nloc)
        return out


def build_transforms(h: QuadtreeHierarchy,
                     domain_mask: np.ndarray | None = None) -> TransformStack:
    """Build the frame, the per-cell plus paint lists, and passive sets."""
    nelx, nely = h.nelx, h.nely
    B = 1 << h.m

    if domain_mask is not None:
        domain_mask = np.asarray(domain_mask, dtype=bool)
        if domain_mask.shape != (nely, nelx):
            raise ValueError(
                f"domain mask shape {domain_mask.shape} does not match "
                f"element grid {(nely, nelx)}")
        passive_void = ~domain_mask
        eroded = ndimage.binary_erosion(domain_mask, iterations=2)
        passive_solid = domain_mask & ~eroded
    else:
        passive_void = np.zeros((nely, nelx), dtype=bool)
        passive_solid = np.zeros((nely, nelx), dtype=bool)
    passive_any = (passive_void | passive_solid).ravel()

    # Level-0 coarse frame: outer ring of every block, passive entries removed.
    frame = np.zeros((nely, nelx), dtype=bool)
    frame[::B, :] = True
    frame[B - 1::B, :] = True
    frame[:, ::B] = True
    frame[:, B - 1::B] = True
    frame &= ~passive_any.reshape(nely, nelx)

    elem_ids: list[np.ndarray] = []
    src_ids: list[np.ndarray] = []
    paint_counts = np.zeros(h.total_cells, dtype=np.int64)
    for k in range(1, h.kbar + 1):
        nx, ny = h.level_resolution(k)
        L = h.cell_size(k)
        # One template cross, shifted per cell.
        template = _plus_elements(0, 0, L, nelx)
        eids, sids = [], []
        for iy in range(ny):
            for ix in range(nx):
                ids = template + (iy * L) * nelx + ix * L
                ids = ids[~passive_any[ids]]
                eids.append(ids)
                sids.append(np.full(len(ids), iy * nx + ix, dtype=np.int64))
                paint_counts[h.gid(k, ix, iy)] = len(ids)
        elem_ids.append(np.concatenate(eids) if eids else np.empty(0, np.int64))
        src_ids.append(np.concatenate(sids) if sids else np.empty(0, np.int64))

    base = np.zeros((nely, nelx))
    base[frame] = 1.0
    base[passive_solid] = 1.0

    return TransformStack(
        hierarchy=h,
        elem_ids=elem_ids,
        src_ids=src_ids,
        paint_counts=paint_counts,
        base=base,
        passive_solid=passive_solid,
        passive_void=passive_void,
        active_cells=paint_counts > 0,
        active_elements=~(passive_void | passive_solid),
    )


def apply_mapping(ts: TransformStack, xtilde: DesignField) -> np.ndarray:
    """Functional alias of :meth:`TransformStack.apply`."""
    return ts.apply(xtilde)


def _parse_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM; returns uint8 rows, top row first."""
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        # skip whitespace and comment lines
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary P5 PGM file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    i += 1  # single whitespace after maxval
    pixels = np.frombuffer(data[i:i + width * height], dtype=np.uint8)
    if len(pixels) != width * height:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(height, width)


def read_mask_pgm(path, h: QuadtreeHierarchy | None = None) -> np.ndarray:
    """Load a domain mask (white = inside) as bool (nely, nelx), row 0 bottom."""
    img = _parse_pgm(path)
    mask = np.flipud(img >= 128)
    if h is not None and mask.shape != (h.nely, h.nelx):
        raise ValueError(
            f"{path}: mask resolution {mask.shape[::-1]} does not match "
            f"element grid {(h.nelx, h.nely)}")
    return mask
