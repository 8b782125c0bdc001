"""Background coarse mesh, active mesh, enrichment zone and layer patches.

Both grids are structured: the background square is split into square
cells, each cut by its lower-left to upper-right diagonal.  Square ``(i, j)``
owns triangles ``2*(i + n*j)`` (lower-right) and ``2*(i + n*j) + 1``
(upper-left); nodes are numbered row-major.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import (
    CellClass,
    DomainShape,
    ResolutionError,
    classify_coarse_cells,
    classify_fine_cells,
    fine_barycenters,
)


class AssumptionViolated(RuntimeError):
    """Active cells that share no vertex with an interior cell."""

    def __init__(self, cells):
        self.cells = np.asarray(cells)
        super().__init__(
            f"{len(self.cells)} active cells share no vertex with an interior cell: "
            f"{self.cells[:10].tolist()}{' ...' if len(self.cells) > 10 else ''}"
        )


def grid_cells(n: int) -> np.ndarray:
    """Vertex indices ``(2*n*n, 3)`` of the split-square triangulation."""
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (i + (n + 1) * j).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = np.stack([v00, v10, v11], axis=1)
    cells[1::2] = np.stack([v00, v11, v01], axis=1)
    return cells


def grid_nodes(x0: float, y0: float, width: float, n: int) -> np.ndarray:
    s = width / n
    j, i = np.divmod(np.arange((n + 1) ** 2), n + 1)
    return np.stack([x0 + i * s, y0 + j * s], axis=1)


def incidence(cells: np.ndarray, n_nodes: int) -> sp.csr_matrix:
    """Cell-by-node 0/1 incidence matrix."""
    rows = np.repeat(np.arange(len(cells)), cells.shape[1])
    data = np.ones(cells.size, dtype=np.int32)
    return sp.csr_matrix((data, (rows, cells.ravel())), shape=(len(cells), n_nodes))


@dataclass(frozen=True)
class Patch:
    seed: object
    layers: int
    cells: np.ndarray  # boolean mask over coarse cells

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.cells)

    def __len__(self) -> int:
        return int(self.cells.sum())


@dataclass(eq=False)
class MeshHierarchy:
    shape: DomainShape
    m: int
    n: int
    k: int
    box: tuple[float, float, float]
    nc: int  # coarse cells per side
    nf: int  # fine cells per side
    coarse_nodes: np.ndarray
    coarse_cells: np.ndarray
    cell_class: np.ndarray
    active: np.ndarray
    zone0: np.ndarray
    zone: np.ndarray
    fine_inside: np.ndarray  # over all fine cells of the background square
    fine_parent: np.ndarray  # coarse cell owning each fine cell
    enrichment: str = "cut"
    _inc: sp.csr_matrix = field(default=None, repr=False)

    @property
    def H(self) -> float:
        return self.box[2] / self.nc

    @property
    def h(self) -> float:
        return self.box[2] / self.nf

    @property
    def ratio(self) -> int:
        return self.nf // self.nc

    @property
    def incidence(self) -> sp.csr_matrix:
        if self._inc is None:
            self._inc = incidence(self.coarse_cells, len(self.coarse_nodes))
        return self._inc

    @property
    def fine_cells(self) -> np.ndarray:
        """Indices (background fine numbering) of inside fine cells in the zone."""
        return np.flatnonzero(self.fine_inside & self.zone[self.fine_parent])

    def coarse_to_lattice(self, node: np.ndarray) -> np.ndarray:
        j, i = np.divmod(np.asarray(node), self.nc + 1)
        r = self.ratio
        return r * i + (self.nf + 1) * r * j

    def grow(self, cells: np.ndarray, layers: int = 1) -> np.ndarray:
        """Vertex-neighbor closure of a cell mask, restricted to active cells."""
        mask = np.asarray(cells, dtype=bool)
        inc = self.incidence
        for _ in range(layers):
            nodes = (inc.T @ mask.astype(np.int32)) > 0
            mask = ((inc @ nodes.astype(np.int32)) > 0) & self.active
        return mask

    def node_patch_mask(self, node: int) -> np.ndarray:
        """omega_x^0: active cells incident to coarse node ``node``."""
        col = self.incidence[:, node].toarray().ravel() > 0
        return col & self.active


def layer_patch(hierarchy: MeshHierarchy, seeds, L: int) -> Patch:
    """L-layer patch around a coarse node (int) or a coarse cell mask/list."""
    if L < 0:
        raise ValueError("L must be nonnegative")
    if np.isscalar(seeds):
        start = hierarchy.node_patch_mask(int(seeds))
    else:
        seeds = np.asarray(seeds)
        if seeds.dtype == bool:
            start = seeds & hierarchy.active
        else:
            start = np.zeros(len(hierarchy.coarse_cells), dtype=bool)
            start[seeds] = True
            start &= hierarchy.active
    return Patch(seeds if np.isscalar(seeds) else "cells", L, hierarchy.grow(start, L))


def build_hierarchy(
    shape: DomainShape,
    m: int,
    n: int,
    k: int = 2,
    enrichment: str = "cut",
    box_halfwidth: float | None = None,
) -> MeshHierarchy:
    """Coarse spacing ``2**-m``, fine spacing ``2**-n``, ``k`` zone layers.

    ``enrichment`` selects the seed of the enrichment zone: ``"cut"`` (cut
    cells), ``"box"`` (cut cells plus cells within ``box_halfwidth`` of the
    shape's singular points) or ``"full"`` (every active cell).
    """
    if n < m:
        raise ValueError("fine level must not be coarser than the coarse level")
    if k < 0:
        raise ValueError("k must be nonnegative")
    H, h = 2.0**-m, 2.0**-n
    if h > shape.h * (1 + 1e-12):
        raise ResolutionError(f"shape was built for h={shape.h}, got h={h}")
    x0, y0, width = shape.box
    nc = width / H
    if abs(nc - round(nc)) > 1e-9:
        raise ResolutionError(f"background box width {width} is not a multiple of H={H}")
    nc = int(round(nc))
    nf = nc * 2 ** (n - m)
    coarse_nodes = grid_nodes(x0, y0, width, nc)
    coarse_cells = grid_cells(nc)

    bary = fine_barycenters(x0, y0, nf, h)
    inside = classify_fine_cells(shape, bary)
    parent = _fine_parent(nf, nc)
    cls = classify_coarse_cells(inside, parent, len(coarse_cells))
    active = cls != CellClass.OUTSIDE

    hier = MeshHierarchy(
        shape, m, n, k, (x0, y0, width), nc, nf, coarse_nodes, coarse_cells,
        cls, active, None, None, inside, parent, enrichment,
    )
    zone0 = cls == CellClass.CUT
    if enrichment == "full":
        zone0 = active.copy()
    elif enrichment == "box":
        if box_halfwidth is None:
            box_halfwidth = 4 * H
        centers = coarse_nodes[coarse_cells].mean(axis=1)
        for px, py in shape.singular_points:
            near = (np.abs(centers[:, 0] - px) < box_halfwidth) & (
                np.abs(centers[:, 1] - py) < box_halfwidth
            )
            zone0 |= near & active
    elif enrichment != "cut":
        raise ValueError(f"unknown enrichment {enrichment!r}")
    hier.zone0 = zone0
    hier.zone = hier.grow(zone0, k) if zone0.any() else zone0.copy()
    return hier


def _fine_parent(nf: int, nc: int) -> np.ndarray:
    r = nf // nc
    cell = np.arange(2 * nf * nf)
    sq, t = np.divmod(cell, 2)
    J, I = np.divmod(sq, nf)
    a, b = I % r, J % r
    # barycenter offsets inside the fine square: (2/3, 1/3) or (1/3, 2/3)
    bx = a + np.where(t == 0, 2 / 3, 1 / 3)
    by = b + np.where(t == 0, 1 / 3, 2 / 3)
    tc = (by > bx).astype(np.int64)
    return 2 * (I // r + nc * (J // r)) + tc


def check_interior_vertex_assumption(hierarchy: MeshHierarchy, strict: bool = True) -> np.ndarray:
    """Active cells sharing no vertex with an interior cell.

    Raises :class:`AssumptionViolated` when ``strict`` and the list is nonempty.
    """
    interior = hierarchy.cell_class == CellClass.INTERIOR
    inc = hierarchy.incidence
    nodes = (inc.T @ interior.astype(np.int32)) > 0
    touching = (inc @ nodes.astype(np.int32)) > 0
    bad = np.flatnonzero(hierarchy.active & ~touching)
    if strict and len(bad):
        raise AssumptionViolated(bad)
    return bad


def export_mesh_csv(hierarchy: MeshHierarchy, prefix) -> None:
    """Write coarse nodes, coarse cells with class/zone flags."""
    prefix = str(prefix)
    with open(prefix + "_nodes.csv", "w") as fh:
        fh.write("node,x,y\n")
        for i, (x, y) in enumerate(hierarchy.coarse_nodes):
            fh.write(f"{i},{float(x)!r},{float(y)!r}\n")
    with open(prefix + "_cells.csv", "w") as fh:
        fh.write("cell,v0,v1,v2,class,active,zone0,zone\n")
        for c, (a, b, d) in enumerate(hierarchy.coarse_cells):
            fh.write(
                f"{c},{a},{b},{d},{CellClass(hierarchy.cell_class[c]).name},"
                f"{int(hierarchy.active[c])},{int(hierarchy.zone0[c])},{int(hierarchy.zone[c])}\n"
            )
