"""Reference solve, localized multiscale solve and energy-error helpers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import energy_norm
from .corrector import CorrectorBasis
from .space import EnrichedSpace

CG_THRESHOLD = 400_000


class IndefiniteSystem(np.linalg.LinAlgError):
    pass


@dataclass
class SolveResult:
    coefficients: np.ndarray  # DOF vector (reference) or coarse coefficients (LOD)
    fine: np.ndarray  # DOF coordinates of the fine representation
    matrix: sp.spmatrix
    load: np.ndarray
    residual: float
    method: str

    def mixed(self, space: EnrichedSpace) -> np.ndarray:
        return space.to_mixed(self.fine)


def _solve_spd(A, b) -> tuple[np.ndarray, str]:
    A = sp.csc_matrix(A)
    if A.shape[0] == 0:
        return np.zeros(0), "empty"
    if A.shape[0] <= CG_THRESHOLD:
        return spla.spsolve(A, b), "direct"
    x, info = spla.cg(A, b, rtol=1e-12, maxiter=20 * A.shape[0])
    if info != 0:
        raise np.linalg.LinAlgError(f"conjugate gradients did not converge (info={info})")
    return x, "cg"


def _rel_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(A @ x - b) / nb) if nb > 0 else float(np.linalg.norm(A @ x))


def solve_reference(space: EnrichedSpace, f: float | Callable = 1.0) -> SolveResult:
    """Galerkin solution in the full enriched space."""
    K, b = space.K, space.load(f)
    u, how = _solve_spd(K, b)
    return SolveResult(u, u, K, b, _rel_residual(K, u, b), how)


def coarse_system(space: EnrichedSpace, basis: CorrectorBasis, f: float | Callable = 1.0):
    Phi = basis.Phi
    Khat = (Phi.T @ space.K @ Phi).toarray()
    Khat = 0.5 * (Khat + Khat.T)
    return Khat, Phi.T @ space.load(f)


def solve_lod(space: EnrichedSpace, basis: CorrectorBasis, f: float | Callable = 1.0) -> SolveResult:
    """Solve in span of the corrected basis; returns the fine representation."""
    Khat, bhat = coarse_system(space, basis, f)
    if Khat.shape[0] == 0:
        z = np.zeros(space.ndof)
        return SolveResult(np.zeros(0), z, Khat, bhat, 0.0, "empty")
    try:
        c = np.linalg.cholesky(Khat)
    except np.linalg.LinAlgError as err:
        raise IndefiniteSystem("coarse stiffness matrix is not positive definite") from err
    u = np.linalg.solve(c.T, np.linalg.solve(c, bhat))
    return SolveResult(u, basis.Phi @ u, Khat, bhat, _rel_residual(Khat, u, bhat), "cholesky")


def relative_energy_error(a: np.ndarray, b: np.ndarray, K) -> float:
    """``|||a - b||| / |||b|||`` in the energy norm induced by ``K``."""
    nb = energy_norm(b, K)
    if nb == 0:
        raise ZeroDivisionError("reference has zero energy")
    return energy_norm(np.asarray(a) - np.asarray(b), K) / nb


def export_solution_csv(space: EnrichedSpace, fine: np.ndarray, path) -> None:
    vals = space.to_mixed(fine)
    with open(path, "w") as fh:
        fh.write("x,y,u\n")
        for (x, y), v in zip(space.nodes, vals):
            fh.write(f"{float(x)!r},{float(y)!r},{v:.15e}\n")
