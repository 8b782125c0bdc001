"""The enriched space: coarse P1 away from the boundary, fine P1 in the zone.

Functions are stored by their values at the *mixed nodes*: the vertices of
the mixed mesh made of fine triangles inside the enrichment zone and coarse
triangles elsewhere.  Mixed nodes on edges of non-zone coarse cells are
constrained (hanging) and follow the coarse linear interpolant, so the space
is conforming without extra fine degrees of freedom on the zone interface.

Degrees of freedom: coarse nodes of non-zone cells first, then free fine
nodes, each group in lattice order.  The extension matrix ``E`` maps DOF
coefficients to mixed-node values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
import shapely

from . import assembly
from .assembly import RobinEdges
from .mesh import MeshHierarchy, grid_cells


def barycentric(tri: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``pts (..., k, 2)`` in ``tri (..., 3, 2)``."""
    a = tri[..., 0, :]
    B = np.stack([tri[..., 1, :] - a, tri[..., 2, :] - a], axis=-1)
    rhs = pts - a[..., None, :]
    lam12 = np.linalg.solve(B[..., None, :, :], rhs[..., None])[..., 0]
    lam0 = 1.0 - lam12.sum(axis=-1, keepdims=True)
    return np.concatenate([lam0, lam12], axis=-1)


@dataclass(eq=False)
class EnrichedSpace:
    hierarchy: MeshHierarchy
    node_lattice: np.ndarray  # lattice id of each mixed node
    nodes: np.ndarray  # mixed node coordinates
    elements: np.ndarray  # (ne, 3) mixed node indices
    element_parent: np.ndarray  # coarse cell of each element
    element_is_fine: np.ndarray
    robin: RobinEdges
    dirichlet: np.ndarray  # mask over mixed nodes
    constrained: np.ndarray  # mask over mixed nodes
    prolongation: sp.csr_matrix  # mixed nodes x all coarse nodes (hat values)
    coarse_dofs: np.ndarray  # coarse node ids
    fine_dofs: np.ndarray  # mixed node ids
    free_nodes: np.ndarray  # N_I, coarse node ids
    all_nodes: np.ndarray  # N, coarse node ids
    E: sp.csr_matrix = field(repr=False, default=None)

    @property
    def n_mixed(self) -> int:
        return len(self.nodes)

    @property
    def ndof(self) -> int:
        return len(self.coarse_dofs) + len(self.fine_dofs)

    @property
    def dirichlet_fine_dofs(self) -> np.ndarray:
        return np.flatnonzero(self.dirichlet & ~self.constrained)

    # -- matrices on mixed nodes ------------------------------------------
    @cached_property
    def K_mixed(self) -> sp.csr_matrix:
        return assembly.assemble_stiffness(self.nodes, self.elements, self.robin)

    @cached_property
    def M_mixed(self) -> sp.csr_matrix:
        return assembly.assemble_mass(self.nodes, self.elements)

    def load_mixed(self, f: float | Callable = 1.0) -> np.ndarray:
        return assembly.assemble_load(self.nodes, self.elements, f)

    # -- matrices on DOFs --------------------------------------------------
    @cached_property
    def K(self) -> sp.csr_matrix:
        return (self.E.T @ self.K_mixed @ self.E).tocsr()

    @cached_property
    def M(self) -> sp.csr_matrix:
        return (self.E.T @ self.M_mixed @ self.E).tocsr()

    def load(self, f: float | Callable = 1.0) -> np.ndarray:
        return self.E.T @ self.load_mixed(f)

    def to_mixed(self, coeffs: np.ndarray) -> np.ndarray:
        return self.E @ coeffs

    def coarse_function(self, values: np.ndarray) -> np.ndarray:
        """Mixed-node values of the coarse P1 function with given nodal values."""
        return self.prolongation @ values

    @cached_property
    def free_index(self) -> dict:
        return {int(x): i for i, x in enumerate(self.free_nodes)}

    @cached_property
    def lifted_hats(self) -> sp.csc_matrix:
        """DOF coefficients of each free hat with its Dirichlet values removed.

        Column ``i`` represents ``phi_x`` (``x = free_nodes[i]``) set to zero at
        the Dirichlet mixed nodes.  For a coarse DOF this is a unit vector; for
        any other free node it is the hat sampled at the fine DOFs.
        """
        nc_dof = len(self.coarse_dofs)
        dof_of = {int(x): i for i, x in enumerate(self.coarse_dofs)}
        P_fine = self.prolongation[self.fine_dofs].tocsc()
        rows, cols, vals = [], [], []
        for i, x in enumerate(self.free_nodes):
            x = int(x)
            if x in dof_of:
                rows.append(np.array([dof_of[x]]))
                cols.append(np.array([i]))
                vals.append(np.array([1.0]))
            else:
                col = P_fine[:, x]
                rows.append(col.indices + nc_dof)
                cols.append(np.full(len(col.indices), i))
                vals.append(col.data)
        rows = np.concatenate(rows) if rows else np.zeros(0, int)
        cols = np.concatenate(cols) if cols else np.zeros(0, int)
        vals = np.concatenate(vals) if vals else np.zeros(0)
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.ndof, len(self.free_nodes)))

    @cached_property
    def dof_cells(self) -> sp.csr_matrix:
        """DOF-by-coarse-cell incidence of basis function supports."""
        ne = len(self.elements)
        rows = self.elements.ravel()
        cols = np.repeat(self.element_parent, 3)
        node_cell = sp.csr_matrix(
            (np.ones(3 * ne, dtype=np.int32), (rows, cols)),
            shape=(self.n_mixed, len(self.hierarchy.coarse_cells)),
        )
        pattern = self.E.copy()
        pattern.data = np.ones_like(pattern.data, dtype=np.float64)
        out = (pattern.T @ node_cell).tocsr()
        out.data[:] = 1
        return out

    def dofs_in(self, cells: np.ndarray) -> np.ndarray:
        """DOFs whose basis function vanishes outside the given cell mask."""
        outside = (~np.asarray(cells, dtype=bool)).astype(np.float64)
        return np.flatnonzero(self.dof_cells @ outside == 0)


def _lattice_xy(hier: MeshHierarchy, ids: np.ndarray) -> np.ndarray:
    x0, y0, _ = hier.box
    J, I = np.divmod(ids, hier.nf + 1)
    return np.stack([x0 + I * hier.h, y0 + J * hier.h], axis=1)


def _closure_lattice(hier: MeshHierarchy, cells: np.ndarray) -> np.ndarray:
    """Lattice ids of all fine lattice points in the closure of coarse cells."""
    if len(cells) == 0:
        return np.zeros(0, dtype=np.int64)
    r = hier.ratio
    a, b = np.meshgrid(np.arange(r + 1), np.arange(r + 1), indexing="ij")
    a, b = a.ravel(), b.ravel()
    lower = b <= a
    upper = b >= a
    sq, t = np.divmod(cells, 2)
    j, i = np.divmod(sq, hier.nc)
    out = []
    for tt, sel in ((0, lower), (1, upper)):
        pick = t == tt
        I = r * i[pick][:, None] + a[sel][None, :]
        J = r * j[pick][:, None] + b[sel][None, :]
        out.append((I + (hier.nf + 1) * J).ravel())
    return np.unique(np.concatenate(out))


def _coarse_hat_values(hier: MeshHierarchy, xy: np.ndarray) -> sp.csr_matrix:
    """Values of every coarse hat at the points ``xy`` (points x nodes)."""
    x0, y0, _ = hier.box
    H, nc = hier.H, hier.nc
    u = (xy[:, 0] - x0) / H
    v = (xy[:, 1] - y0) / H
    i = np.clip(np.floor(u + 1e-12).astype(np.int64), 0, nc - 1)
    j = np.clip(np.floor(v + 1e-12).astype(np.int64), 0, nc - 1)
    lu, lv = u - i, v - j
    v00 = i + (nc + 1) * j
    v10, v01, v11 = v00 + 1, v00 + nc + 1, v00 + nc + 2
    lower = lv <= lu
    cols = np.where(
        lower[:, None],
        np.stack([v00, v10, v11], axis=1),
        np.stack([v00, v11, v01], axis=1),
    )
    vals = np.where(
        lower[:, None],
        np.stack([1 - lu, lu - lv, lv], axis=1),
        np.stack([1 - lv, lu, lv - lu], axis=1),
    )
    vals[np.abs(vals) < 1e-13] = 0.0
    rows = np.repeat(np.arange(len(xy)), 3)
    P = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(len(xy), (nc + 1) ** 2))
    P.eliminate_zeros()
    return P


FREE_RULES = ("support", "interior")


def build_space(hier: MeshHierarchy, free_rule: str = "support") -> EnrichedSpace:
    """Mixed mesh, boundary pieces, Dirichlet nodes and the DOF basis.

    ``free_rule`` selects the free coarse nodes: ``"support"`` keeps every
    node whose hat is a nonzero function of the space and which carries no
    Dirichlet piece; ``"interior"`` keeps only nodes in the open domain.
    """
    if free_rule not in FREE_RULES:
        raise ValueError(f"unknown free-node rule {free_rule!r}")
    shape = hier.shape
    r = hier.ratio
    coarse_el = np.flatnonzero(hier.active & ~hier.zone)
    fine_el = hier.fine_cells
    lat_coarse = hier.coarse_to_lattice(hier.coarse_cells[coarse_el])
    lat_fine = grid_cells(hier.nf)[fine_el] if len(fine_el) else np.zeros((0, 3), np.int64)
    el_lattice = np.concatenate([lat_coarse, lat_fine]).astype(np.int64)
    parent = np.concatenate([coarse_el, hier.fine_parent[fine_el]])
    is_fine = np.concatenate([np.zeros(len(coarse_el), bool), np.ones(len(fine_el), bool)])

    node_lattice, elements = np.unique(el_lattice, return_inverse=True)
    elements = elements.reshape(-1, 3)
    nodes = _lattice_xy(hier, node_lattice)

    constrained = np.isin(node_lattice, _closure_lattice(hier, coarse_el))
    robin, dirichlet = _boundary_pieces(hier, nodes, elements, is_fine, r)

    P = _coarse_hat_values(hier, nodes)

    active_nodes = np.unique(hier.coarse_cells[hier.active])
    node_pos = {int(l): i for i, l in enumerate(node_lattice)}
    coarse_lat = hier.coarse_to_lattice(active_nodes)
    coarse_dir = np.array(
        [node_pos.get(int(l), -1) >= 0 and dirichlet[node_pos[int(l)]] for l in coarse_lat],
        dtype=bool,
    )
    # a hat that vanishes at every non-Dirichlet mixed node carries no
    # function of the space (e.g. a node beyond a sliver whose only inside
    # points lie on the Dirichlet boundary)
    seen = np.asarray(abs(P[~dirichlet]).sum(axis=0)).ravel()[active_nodes] > 1e-12
    free = ~coarse_dir & seen
    if free_rule == "interior":
        xy = hier.coarse_nodes[active_nodes]
        free &= shapely.contains_xy(shape.region, xy[:, 0], xy[:, 1])
    free_nodes = active_nodes[free]
    nonzone_nodes = np.unique(hier.coarse_cells[coarse_el]) if len(coarse_el) else np.zeros(0, np.int64)
    coarse_dofs = np.setdiff1d(nonzone_nodes, active_nodes[coarse_dir])
    fine_dofs = np.flatnonzero(~constrained & ~dirichlet)

    keep = sp.diags((~dirichlet).astype(float))
    Ec = keep @ P[:, coarse_dofs]
    Ef = sp.csr_matrix(
        (np.ones(len(fine_dofs)), (fine_dofs, np.arange(len(fine_dofs)))),
        shape=(len(nodes), len(fine_dofs)),
    )
    E = sp.hstack([Ec, Ef]).tocsr()
    E.eliminate_zeros()

    return EnrichedSpace(
        hier, node_lattice, nodes, elements, parent, is_fine, robin, dirichlet,
        constrained, P, coarse_dofs, fine_dofs, free_nodes, active_nodes, E,
    )


def _boundary_pieces(hier, nodes, elements, is_fine, r):
    """Find element edge pieces on the domain boundary.

    Each element edge is split into lattice-length pieces; a piece is on the
    boundary when a point just across it lies outside the domain.
    """
    shape = hier.shape
    h = hier.h
    local_edges = np.array([[0, 1], [1, 2], [2, 0]])
    A_all, B_all, T0, T1, EL = [], [], [], [], []
    for fine_flag, nsub in ((False, r), (True, 1)):
        els = np.flatnonzero(is_fine == fine_flag)
        if len(els) == 0:
            continue
        for le, (ia, ib) in enumerate(local_edges):
            a = elements[els, ia]
            b = elements[els, ib]
            for s in range(nsub):
                A_all.append(a)
                B_all.append(b)
                T0.append(np.full(len(els), s / nsub))
                T1.append(np.full(len(els), (s + 1) / nsub))
                EL.append(np.stack([els, np.full(len(els), 3 - ia - ib)], axis=1))
    if not A_all:
        empty = np.zeros(0)
        return RobinEdges(empty.astype(int), empty.astype(int), empty, empty, empty), np.zeros(len(nodes), bool)
    a = np.concatenate(A_all)
    b = np.concatenate(B_all)
    t0 = np.concatenate(T0)
    t1 = np.concatenate(T1)
    el = np.concatenate(EL)
    pa, pb = nodes[a], nodes[b]
    third = nodes[elements[el[:, 0], el[:, 1]]]
    mid = pa + (0.5 * (t0 + t1))[:, None] * (pb - pa)
    d = pb - pa
    normal = np.stack([d[:, 1], -d[:, 0]], axis=1)
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    flip = np.einsum("ij,ij->i", normal, third - pa) > 0
    normal[flip] *= -1
    probe = mid + 0.25 * h * normal
    on_boundary = ~shape.contains(probe)
    a, b, t0, t1, mid = a[on_boundary], b[on_boundary], t0[on_boundary], t1[on_boundary], mid[on_boundary]
    is_dir, kappa = shape.tag_arrays(mid) if len(mid) else (np.zeros(0, bool), np.zeros(0))
    dirichlet = np.zeros(len(nodes), dtype=bool)
    dirichlet[a[is_dir]] = True
    dirichlet[b[is_dir]] = True
    keep = ~is_dir
    robin = RobinEdges(a[keep], b[keep], t0[keep], t1[keep], kappa[keep])
    return robin, dirichlet
