"""Projective Clement interpolation and its constraint functionals.

For a free coarse node ``x`` the weight vector ``lambda_x`` acts on mixed-node
values: ``lambda_x^T v`` is the value at ``x`` of the L2 projection of ``v``
onto the coarse hats living on the node patch ``omega_x^0`` (measured in
``L2(omega_x^0 cap Omega)``).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import element_mass
from .space import EnrichedSpace, barycentric


class SingularGram(np.linalg.LinAlgError):
    pass


@dataclass(eq=False)
class ClementOperator:
    space: EnrichedSpace
    Lambda: sp.csc_matrix  # mixed nodes x free nodes
    gram_cond: np.ndarray = field(repr=False)

    @property
    def free_nodes(self) -> np.ndarray:
        return self.space.free_nodes

    @property
    def C(self) -> sp.csc_matrix:
        """Constraint functionals on DOF coefficients (DOFs x free nodes)."""
        if not hasattr(self, "_C"):
            C = (self.space.E.T @ self.Lambda).tocsc()
            # exact zeros (e.g. lambda_y on hats of other coarse nodes) come
            # out as roundoff; keeping them makes patch saddle systems singular
            scale = np.abs(C).max() if C.nnz else 0.0
            C.data[np.abs(C.data) < 1e-12 * scale] = 0.0
            C.eliminate_zeros()
            self._C = C
        return self._C

    def apply(self, v_mixed: np.ndarray) -> np.ndarray:
        """Coarse nodal coefficients of ``I_H v`` over all coarse nodes."""
        out = np.zeros(self.space.prolongation.shape[1])
        out[self.free_nodes] = self.Lambda.T @ v_mixed
        return out

    def lift(self, coarse: np.ndarray) -> np.ndarray:
        return self.space.coarse_function(coarse)


def _cell_blocks(space: EnrichedSpace):
    """Per coarse cell ``S_T = M_T Pi_T`` (sparse) and ``G_T = Pi_T^T M_T Pi_T``."""
    hier = space.hierarchy
    ncell = len(hier.coarse_cells)
    coords = space.nodes[space.elements]
    parent = space.element_parent
    tri = hier.coarse_nodes[hier.coarse_cells[parent]]
    V = barycentric(tri, coords)  # (ne, element vertex, cell vertex)
    V[np.abs(V) < 1e-13] = 0.0
    Me = element_mass(coords)
    MV = Me @ V
    cols = np.broadcast_to(3 * parent[:, None, None] + np.arange(3), MV.shape).ravel()
    rows = np.broadcast_to(space.elements[:, :, None], MV.shape).ravel()
    S = sp.csc_matrix((MV.ravel(), (rows, cols)), shape=(space.n_mixed, 3 * ncell))
    G = np.zeros((ncell, 3, 3))
    np.add.at(G, parent, np.einsum("eai,eab->eib", V, MV))
    return S, G


def build_clement(space: EnrichedSpace, workers: int = 1) -> ClementOperator:
    """Assemble the weight vectors ``lambda_x`` for every free node."""
    hier = space.hierarchy
    S, G = _cell_blocks(space)
    inc = hier.incidence.tocsc()
    cells_all = hier.coarse_cells
    active = hier.active

    def one(x):
        cells = inc[:, x].indices
        cells = cells[active[cells]]
        verts = np.unique(cells_all[cells])
        pos = {int(v): i for i, v in enumerate(verts)}
        Gx = np.zeros((len(verts), len(verts)))
        idx = np.array([[pos[int(v)] for v in cells_all[c]] for c in cells])
        for c, ii in zip(cells, idx):
            Gx[np.ix_(ii, ii)] += G[c]
        rhs = np.zeros(len(verts))
        rhs[pos[int(x)]] = 1.0
        try:
            lu = sla.lu_factor(Gx, check_finite=False)
            w = sla.lu_solve(lu, rhs)
        except (sla.LinAlgError, ValueError) as err:
            raise SingularGram(f"singular local Gram matrix at node {x}") from err
        d = np.abs(np.diag(lu[0]))
        if d.min() <= 1e-14 * d.max():
            raise SingularGram(f"singular local Gram matrix at node {x}")
        # lambda_x = sum_T S_T w_T
        colsel = (3 * cells[:, None] + np.arange(3)).ravel()
        weights = w[idx.ravel()]
        lam = S[:, colsel] @ weights
        return lam, d.max() / d.min()

    nodes = [int(x) for x in space.free_nodes]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, nodes))
    else:
        results = [one(x) for x in nodes]
    cols = [sp.csc_matrix(lam[:, None]) for lam, _ in results]
    Lambda = sp.hstack(cols, format="csc") if cols else sp.csc_matrix((space.n_mixed, 0))
    Lambda.eliminate_zeros()
    return ClementOperator(space, Lambda, np.array([c for _, c in results]))


def dense_projection_value(space: EnrichedSpace, x: int, v_mixed: np.ndarray) -> float:
    """Independent check of ``(P_x v)(x)`` via dense normal equations.

    Builds the patch mass matrix from scratch and solves the least-squares
    problem ``min ||v - sum_y c_y phi_y||_{omega_x^0}``.
    """
    hier = space.hierarchy
    cells = np.flatnonzero(hier.node_patch_mask(x))
    el = np.flatnonzero(np.isin(space.element_parent, cells))
    verts = np.unique(hier.coarse_cells[cells])
    sub_nodes = np.unique(space.elements[el])
    loc = {int(n): i for i, n in enumerate(sub_nodes)}
    M = np.zeros((len(sub_nodes), len(sub_nodes)))
    Me = element_mass(space.nodes[space.elements[el]])
    for e, m in zip(space.elements[el], Me):
        ii = [loc[int(n)] for n in e]
        M[np.ix_(ii, ii)] += m
    Pi = space.prolongation[sub_nodes][:, verts].toarray()
    # symmetric square root of M turns the weighted problem into plain lstsq
    w, U = np.linalg.eigh(M)
    R = (U * np.sqrt(np.clip(w, 0, None))) @ U.T
    coef, *_ = np.linalg.lstsq(R @ Pi, R @ v_mixed[sub_nodes], rcond=None)
    return float(coef[np.searchsorted(verts, x)])
