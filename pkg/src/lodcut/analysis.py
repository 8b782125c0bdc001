"""Condition numbers, corrector decay and Poincare-Friedrichs estimates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla
import shapely

from .assembly import assemble_mass, assemble_stiffness, element_areas, energy_norm
from .corrector import CorrectorProblem
from .geometry import DomainShape, fine_barycenters
from .mesh import grid_cells, grid_nodes

DENSE_EIG_LIMIT = 2000


# -- condition numbers ------------------------------------------------------
def condition_number(A) -> float:
    """Spectral condition number of a symmetric positive definite matrix."""
    n = A.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    if n <= DENSE_EIG_LIMIT:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        w = sla.eigvalsh(0.5 * (dense + dense.T))
        lo, hi = w[0], w[-1]
    else:
        A = sp.csc_matrix(A)
        hi = spla.eigsh(A, k=1, which="LA", tol=1e-8, return_eigenvectors=False)[0]
        lo = spla.eigsh(A, k=1, sigma=0.0, which="LM", tol=1e-8, return_eigenvectors=False)[0]
    if lo <= 0:
        raise np.linalg.LinAlgError(f"matrix is not positive definite (lambda_min={lo:.3e})")
    return float(hi / lo)


def loglog_slope(H: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``log values`` against ``log H``."""
    H = np.asarray(H, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(H) < 3:
        raise ValueError("need at least three points for a slope fit")
    if np.any(values <= 0):
        raise ValueError("values must be positive for a log-log fit")
    return float(np.polyfit(np.log2(H), np.log2(values), 1)[0])


def condition_scaling(H: Sequence[float], conds: Sequence[float]) -> float:
    """Fitted exponent ``p`` in ``cond ~ H**-p``."""
    return -loglog_slope(H, conds)


# -- corrector decay -----------------------------------------------------------
@dataclass
class DecayReport:
    node: int
    layers: np.ndarray
    errors: np.ndarray  # |||(Q - Q^L) phi_x|||
    global_energy: float  # |||Q phi_x|||
    slope: float  # d log(error) / dL (natural log), nan when undefined
    rate: float  # exp(slope)

    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.errors) < 0))


def measure_decay(problem: CorrectorProblem, x: int, L_max: int) -> DecayReport:
    """Localization error of the corrector at coarse node ``x`` for L=1..L_max."""
    space = problem.space
    if x not in space.free_index:
        raise KeyError(f"node {x} is not a free coarse node")
    K = space.K
    ref = problem.solve(space.free_index[x], None)
    full = problem.basis_column(ref)
    Ls = np.arange(1, L_max + 1)
    errs = []
    for L in Ls:
        loc = problem.basis_column(problem.solve(space.free_index[x], int(L)))
        errs.append(energy_norm(full - loc, K))
    errs = np.array(errs)
    qnorm = energy_norm(problem.correction_mixed(ref), space.K_mixed)
    ok = errs > 1e-14 * max(qnorm, 1.0)
    if ok.sum() >= 2:
        slope = float(np.polyfit(Ls[ok], np.log(errs[ok]), 1)[0])
    else:
        slope = float("nan")
    return DecayReport(x, Ls, errs, qnorm, slope, float(np.exp(slope)))


# -- Poincare-Friedrichs -----------------------------------------------------
@dataclass
class PFEstimate:
    s_max: int
    r_max: int
    eta: float
    gamma_length: float
    H: float
    bound: float
    rayleigh: float | None = None


@dataclass
class TriMesh:
    nodes: np.ndarray
    cells: np.ndarray

    @property
    def diameter(self) -> float:
        """Bounding-box diagonal."""
        lo, hi = self.nodes.min(axis=0), self.nodes.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def boundary_facets(self) -> np.ndarray:
        e = np.sort(np.concatenate([self.cells[:, [0, 1]], self.cells[:, [1, 2]], self.cells[:, [2, 0]]]), axis=1)
        uniq, count = np.unique(e, axis=0, return_counts=True)
        return uniq[count == 1]

    def facets_on(self, geom, tol: float = 1e-9) -> np.ndarray:
        """Boundary facets lying on a shapely geometry."""
        f = self.boundary_facets()
        a, b = self.nodes[f[:, 0]], self.nodes[f[:, 1]]
        on = shapely.dwithin(geom, shapely.points(a), tol) & shapely.dwithin(geom, shapely.points(b), tol)
        on &= shapely.dwithin(geom, shapely.points(0.5 * (a + b)), tol)
        return f[on]


def shape_mesh(shape: DomainShape, h: float | None = None) -> TriMesh:
    """Lattice triangulation of a shape at spacing ``h`` (default ``shape.h``)."""
    h = shape.h if h is None else h
    x0, y0, width = shape.box
    n = int(round(width / h))
    bary = fine_barycenters(x0, y0, n, h)
    cells = grid_cells(n)[shape.contains(bary)]
    used, inv = np.unique(cells, return_inverse=True)
    return TriMesh(grid_nodes(x0, y0, width, n)[used], inv.reshape(cells.shape))


def _face_adjacency(cells: np.ndarray) -> sp.csr_matrix:
    ne = len(cells)
    e = np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]])
    e = np.sort(e, axis=1)
    owner = np.tile(np.arange(ne), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e, owner = e[order], owner[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    a, b = owner[:-1][same], owner[1:][same]
    data = np.ones(2 * len(a))
    return sp.csr_matrix((data, (np.concatenate([a, b]), np.concatenate([b, a]))), shape=(ne, ne))


def path_forest(mesh: TriMesh, gamma_facets: np.ndarray):
    """Shortest element paths to the elements touching gamma.

    Returns ``(s, pred)``: path length in elements for each element (1 for
    elements touching gamma) and the predecessor toward gamma (-1 at roots).
    """
    ne = len(mesh.cells)
    gnodes = np.unique(gamma_facets)
    touch = np.isin(mesh.cells, gnodes).any(axis=1)
    if not touch.any():
        raise ValueError("gamma touches no element")
    adj = _face_adjacency(mesh.cells)
    # super-source ``ne`` linked to every gamma-touching element
    src = np.flatnonzero(touch)
    extra = sp.csr_matrix((np.ones(len(src)), (np.full(len(src), ne), src)), shape=(ne + 1, ne + 1))
    G = sp.bmat([[adj, None], [None, sp.csr_matrix((1, 1))]], format="csr") + extra + extra.T
    dist, pred = csgraph.shortest_path(G, unweighted=True, indices=ne, return_predecessors=True)
    dist, pred = dist[:ne], pred[:ne]
    if not np.all(np.isfinite(dist)):
        raise ValueError("partition is disconnected from gamma")
    pred = np.where(pred == ne, -1, pred)
    return dist.astype(int), pred


def pf_path_bound(mesh: TriMesh, gamma_facets: np.ndarray, H: float | None = None) -> PFEstimate:
    """``s_max * r_max * eta**3 / (|gamma| * H**2)`` from a BFS path forest.

    ``eta`` is the lattice spacing of the partition (``sqrt(2 * area)`` of the
    largest right triangle); ``H`` defaults to ``eta``.
    """
    s, pred = path_forest(mesh, gamma_facets)
    # r: number of chosen paths through each element = forest subtree size
    r = np.ones(len(s), dtype=np.int64)
    for e in np.argsort(-s, kind="stable"):
        if pred[e] >= 0:
            r[pred[e]] += r[e]
    eta = float(np.sqrt(2 * element_areas(mesh.nodes[mesh.cells]).max()))
    H = eta if H is None else float(H)
    g = mesh.nodes[gamma_facets]
    glen = float(np.linalg.norm(g[:, 1] - g[:, 0], axis=1).sum())
    s_max, r_max = int(s.max()), int(r.max())
    return PFEstimate(s_max, r_max, eta, glen, H, s_max * r_max * eta**3 / (glen * H**2))


def pf_rayleigh(mesh: TriMesh, gamma_facets: np.ndarray) -> float:
    """``C = 1 / (diam * sqrt(lambda_min))`` on ``{u : mean_gamma(u) = 0}``."""
    n = len(mesh.nodes)
    K = assemble_stiffness(mesh.nodes, mesh.cells).tocsc()
    M = assemble_mass(mesh.nodes, mesh.cells).tocsc()
    # gamma average as a linear functional ell^T u
    a, b = gamma_facets[:, 0], gamma_facets[:, 1]
    seg = np.linalg.norm(mesh.nodes[b] - mesh.nodes[a], axis=1)
    ell = np.bincount(np.concatenate([a, b]), weights=np.tile(seg / 2, 2), minlength=n)
    ell /= seg.sum()
    p = int(np.argmax(np.abs(ell)))
    rest = np.delete(np.arange(n), p)
    coef = -ell[rest] / ell[p]

    def Z(w):
        u = np.empty(n)
        u[rest] = w
        u[p] = coef @ w
        return u

    def Zt(v):
        return v[rest] + coef * v[p]

    m = n - 1
    if m <= DENSE_EIG_LIMIT:
        Zd = np.zeros((n, m))
        Zd[rest, np.arange(m)] = 1.0
        Zd[p] = coef
        Kz = Zd.T @ (K @ Zd)
        Mz = Zd.T @ (M @ Zd)
        lam = sla.eigh(Kz, Mz, eigvals_only=True, subset_by_index=[0, 0])[0]
    else:
        A = sp.bmat([[K, sp.csc_matrix(ell[:, None])], [sp.csr_matrix(ell[None, :]), None]], format="csc")
        lu = spla.splu(A)

        def kinv(g):
            v = np.zeros(n + 1)
            v[rest] = g
            return lu.solve(v)[rest]

        op = lambda f: (lambda w: f(np.asarray(w).ravel()))  # noqa: E731
        Mop = spla.LinearOperator((m, m), matvec=op(lambda w: Zt(M @ Z(w))), dtype=float)
        Kop = spla.LinearOperator((m, m), matvec=op(lambda w: Zt(K @ Z(w))), dtype=float)
        Kinv = spla.LinearOperator((m, m), matvec=op(kinv), dtype=float)
        mu = spla.eigsh(Mop, k=1, M=Kop, Minv=Kinv, which="LA", tol=1e-10, return_eigenvectors=False)[0]
        lam = 1.0 / mu
    if lam <= 0:
        raise np.linalg.LinAlgError("nonpositive constrained eigenvalue")
    return float(1.0 / (mesh.diameter * np.sqrt(lam)))
