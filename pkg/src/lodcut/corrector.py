"""Corrector saddle-point problems and the corrected coarse basis.

For a free node ``x`` the corrected basis function ``phi_x + Q^L phi_x`` is
computed directly: it equals the lifted hat (the hat with its Dirichlet
values removed) plus a correction ``d`` supported on the patch, chosen to
minimize the energy subject to ``I_H(phi_x + Q^L phi_x) = phi_x``.  The
Lagrange system is

    [ K_JJ   C_JY ] [ d  ]   [ -K_J t_x          ]
    [ C_JY^T  0   ] [ mu ] = [ e_x - C_Y^T t_x   ]

with ``J`` the DOFs supported in the patch and ``Y`` the free nodes whose
constraint sees them.  Removing the Dirichlet values of the hat is exactly the
compensation ``Q phi_x = -phi_x`` on the Dirichlet boundary.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .clement import ClementOperator
from .space import EnrichedSpace

DENSE_LIMIT = 2000


class SingularSaddle(np.linalg.LinAlgError):
    pass


class CorrectorFailures(RuntimeError):
    def __init__(self, failures: dict):
        self.failures = failures
        super().__init__(f"corrector solves failed at nodes {sorted(failures)}")


def default_layers(H: float, c2: float = 1.5) -> int:
    """Patch size rule ``ceil(c2 * log2(1/H))``."""
    return int(math.ceil(c2 * math.log2(1.0 / H) - 1e-12))


@dataclass
class CorrectorResult:
    node: int
    layers: int | None  # None for the global corrector
    dofs: np.ndarray
    correction: np.ndarray  # values on ``dofs``
    multiplier: np.ndarray
    residual: float
    constraint_residual: float


@dataclass(eq=False)
class CorrectorProblem:
    """Shared read-only data for all corrector solves of one space."""

    space: EnrichedSpace
    clement: ClementOperator
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        sp_ = self.space
        self.K = sp_.K
        self.C = self.clement.C.tocsr()
        self.T = sp_.lifted_hats
        self.KT = (self.K @ self.T).tocsc()
        self.CT = (self.C.T @ self.T).tocsc()  # free x free

    def patch(self, x: int, layers: int | None) -> np.ndarray:
        hier = self.space.hierarchy
        if layers is None:
            return hier.active.copy()
        return hier.grow(hier.node_patch_mask(x), layers)

    def _system(self, cells: np.ndarray):
        key = cells.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        J = self.space.dofs_in(cells)
        CJ = self.C[J]
        Y = np.unique(CJ.indices)
        KJJ = self.K[J][:, J]
        CJY = CJ[:, Y]
        A = sp.bmat([[KJJ, CJY], [CJY.T, None]], format="csc")
        solver = None
        if A.shape[0]:
            try:
                # symmetric minimum-degree ordering keeps the fill of these
                # 2D saddle systems roughly ten times below the COLAMD default
                lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", options=dict(SymmetricMode=True))
                solver = lu.solve
            except RuntimeError:
                if A.shape[0] > DENSE_LIMIT:
                    raise SingularSaddle(f"singular saddle system of size {A.shape[0]}")
                Ad = A.toarray()
                pinv = np.linalg.pinv(Ad)
                solver = pinv.__matmul__
        hit = (J, Y, A, solver)
        if len(self._cache) < 8:
            self._cache[key] = hit
        return hit

    def solve(self, i: int, layers: int | None) -> CorrectorResult:
        """Corrector for the ``i``-th free node on its ``layers`` patch."""
        x = int(self.space.free_nodes[i])
        cells = self.patch(x, layers)
        J, Y, A, solver = self._system(cells)
        t = self.KT[:, i].toarray().ravel()
        rhs1 = -t[J]
        e = np.zeros(len(Y))
        e[Y == i] = 1.0
        rhs2 = e - self.CT[:, i].toarray().ravel()[Y]
        rhs = np.concatenate([rhs1, rhs2])
        if solver is None:
            sol = np.zeros(0)
        else:
            sol = solver(rhs)
        d, mu = sol[: len(J)], sol[len(J):]
        res = float(np.linalg.norm(A @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)) if len(rhs) else 0.0
        coeff = self.T[:, i].toarray().ravel()
        coeff[J] += d
        cres = self.C.T @ coeff
        cres[i] -= 1.0
        return CorrectorResult(x, layers, J, d, mu, res, float(np.abs(cres).max()))

    def correction_mixed(self, result: CorrectorResult) -> np.ndarray:
        """Mixed-node values of ``Q phi_x`` (includes the Dirichlet compensation)."""
        i = self.space.free_index[result.node]
        coeff = self.T[:, i].toarray().ravel()
        coeff[result.dofs] += result.correction
        hat = self.space.prolongation[:, result.node].toarray().ravel()
        return self.space.E @ coeff - hat

    def basis_column(self, result: CorrectorResult) -> np.ndarray:
        i = self.space.free_index[result.node]
        coeff = self.T[:, i].toarray().ravel()
        coeff[result.dofs] += result.correction
        return coeff


def solve_local_corrector(problem: CorrectorProblem, x: int, L: int) -> CorrectorResult:
    return problem.solve(problem.space.free_index[int(x)], L)


def solve_global_corrector(problem: CorrectorProblem, x: int) -> CorrectorResult:
    return problem.solve(problem.space.free_index[int(x)], None)


@dataclass(eq=False)
class CorrectorBasis:
    Phi: sp.csc_matrix  # DOFs x free nodes, columns phi_x + Q^L phi_x
    layers: int | None
    diagnostics: list

    @property
    def max_constraint_residual(self) -> float:
        return max((d.constraint_residual for d in self.diagnostics), default=0.0)


def build_basis(problem: CorrectorProblem, L: int | None, workers: int = 1) -> CorrectorBasis:
    """Corrected basis for all free nodes; ``L=None`` uses global correctors."""
    n = len(problem.space.free_nodes)
    failures = {}

    def one(i):
        try:
            return problem.solve(i, L)
        except (SingularSaddle, RuntimeError, np.linalg.LinAlgError) as err:
            failures[int(problem.space.free_nodes[i])] = str(err)
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(n)))
    else:
        results = [one(i) for i in range(n)]
    if failures:
        raise CorrectorFailures(failures)
    rows, cols, vals = [], [], []
    for i, res in enumerate(results):
        rows.append(res.dofs)
        cols.append(np.full(len(res.dofs), i))
        vals.append(res.correction)
    D = sp.csc_matrix(
        (np.concatenate(vals) if vals else [], (np.concatenate(rows) if rows else [], np.concatenate(cols) if cols else [])),
        shape=(problem.space.ndof, n),
    )
    Phi = (problem.T + D).tocsc()
    Phi.eliminate_zeros()
    diags = [
        CorrectorDiagnostics(r.node, L, len(r.dofs), len(r.multiplier), r.residual, r.constraint_residual,
                             float(np.abs(r.multiplier).max()) if len(r.multiplier) else 0.0)
        for r in results
    ]
    return CorrectorBasis(Phi, L, diags)


@dataclass(frozen=True)
class CorrectorDiagnostics:
    node: int
    layers: int | None
    n_unknowns: int
    n_constraints: int
    residual: float
    constraint_residual: float
    multiplier_max: float


def export_diagnostics_csv(basis: CorrectorBasis, path) -> None:
    with open(path, "w") as fh:
        fh.write("node,layers,n_unknowns,n_constraints,residual,constraint_residual,multiplier_max\n")
        for d in basis.diagnostics:
            fh.write(
                f"{d.node},{'' if d.layers is None else d.layers},{d.n_unknowns},{d.n_constraints},"
                f"{d.residual:.6e},{d.constraint_residual:.6e},{d.multiplier_max:.6e}\n"
            )
