"""P1 element matrices, global assembly, Robin boundary terms and norms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

# degree-4 six-point rule on the reference triangle (barycentric, weights sum to 1)
_A, _B = 0.445948490915965, 0.091576213509771
_WA, _WB = 0.223381589678011, 0.109951743655322
QUAD_BARY = np.array(
    [
        [_A, _A, 1 - 2 * _A],
        [_A, 1 - 2 * _A, _A],
        [1 - 2 * _A, _A, _A],
        [_B, _B, 1 - 2 * _B],
        [_B, 1 - 2 * _B, _B],
        [1 - 2 * _B, _B, _B],
    ]
)
QUAD_W = np.array([_WA] * 3 + [_WB] * 3)


def _geometry(coords: np.ndarray):
    coords = np.asarray(coords, dtype=float)
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * np.abs(det)
    # gradients of barycentric coordinates
    g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    return area, grads


def element_stiffness(coords: np.ndarray) -> np.ndarray:
    """Local P1 stiffness matrices, shape ``(ne, 3, 3)``."""
    area, grads = _geometry(coords)
    return area[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def element_mass(coords: np.ndarray) -> np.ndarray:
    area, _ = _geometry(coords)
    return area[:, None, None] * _MASS_REF


def element_areas(coords: np.ndarray) -> np.ndarray:
    return _geometry(coords)[0]


def assemble(cells: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    """Scatter local 3x3 blocks into an ``n x n`` matrix in cell order."""
    rows = np.repeat(cells, 3, axis=1).ravel()
    cols = np.tile(cells, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class RobinEdges:
    """Boundary pieces lying on element edges.

    Piece ``e`` is the part ``t in [t0, t1]`` of the segment from node ``a`` to
    node ``b``; along it the element functions of ``a`` and ``b`` are
    ``1 - t`` and ``t``.
    """

    a: np.ndarray
    b: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    kappa: np.ndarray

    @classmethod
    def whole(cls, a, b, kappa) -> "RobinEdges":
        a = np.atleast_1d(a)
        kappa = np.broadcast_to(np.asarray(kappa, dtype=float), a.shape)
        return cls(a, np.atleast_1d(b), np.zeros(a.shape), np.ones(a.shape), kappa)


def robin_matrix(nodes: np.ndarray, edges: RobinEdges, n: int) -> sp.csr_matrix:
    """Exact ``int kappa u v dS`` for P1 functions on the given pieces."""
    keep = edges.kappa > 0
    a, b = edges.a[keep], edges.b[keep]
    t0, t1, kappa = edges.t0[keep], edges.t1[keep], edges.kappa[keep]
    full = np.linalg.norm(nodes[b] - nodes[a], axis=1)
    ell = full * (t1 - t0)
    # endpoint values of phi_a and phi_b on the piece
    va = np.stack([1 - t0, 1 - t1], axis=1)
    vb = np.stack([t0, t1], axis=1)

    def pair(u, v):
        return ell / 6.0 * (2 * u[:, 0] * v[:, 0] + u[:, 0] * v[:, 1] + u[:, 1] * v[:, 0] + 2 * u[:, 1] * v[:, 1])

    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    k4 = np.tile(kappa, 4)
    vals = k4 * np.concatenate([pair(va, va), pair(va, vb), pair(vb, va), pair(vb, vb)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble_stiffness(nodes: np.ndarray, cells: np.ndarray, robin: RobinEdges | None = None) -> sp.csr_matrix:
    """Stiffness plus Robin boundary matrix on a P1 mesh."""
    n = len(nodes)
    K = assemble(cells, element_stiffness(nodes[cells]), n)
    if robin is not None and len(robin.a):
        K = K + robin_matrix(nodes, robin, n)
    return K.tocsr()


def assemble_mass(nodes: np.ndarray, cells: np.ndarray) -> sp.csr_matrix:
    n = len(nodes)
    if len(cells) == 0:
        return sp.csr_matrix((n, n))
    return assemble(cells, element_mass(nodes[cells]), n)


def assemble_load(nodes: np.ndarray, cells: np.ndarray, f: float | Callable = 1.0) -> np.ndarray:
    """``b_i = int f phi_i``; exact for constant f, degree-4 quadrature otherwise."""
    n = len(nodes)
    coords = nodes[cells]
    area = element_areas(coords)
    if np.isscalar(f):
        local = np.repeat((float(f) * area / 3.0)[:, None], 3, axis=1)
    else:
        pts = np.einsum("qi,eid->eqd", QUAD_BARY, coords)
        fv = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float)
        fv = np.broadcast_to(fv, pts.shape[:2])
        local = area[:, None] * np.einsum("q,eq,qi->ei", QUAD_W, fv, QUAD_BARY)
    return np.bincount(cells.ravel(), weights=local.ravel(), minlength=n)


def _quadratic_norm(v: np.ndarray, A) -> float:
    q = float(v @ (A @ v))
    if q < 0:
        scale = float(np.abs(v) @ (abs(A) @ np.abs(v)))
        if q < -1e-12 * max(scale, 1e-300):
            raise ArithmeticError(f"negative quadratic form {q}: assembly is broken")
        q = 0.0
    return float(np.sqrt(q))


def energy_norm(v: np.ndarray, A) -> float:
    """``sqrt(v^T A v)`` with ``A`` the stiffness-plus-Robin matrix."""
    return _quadratic_norm(np.asarray(v, dtype=float), A)


def l2_norm(v: np.ndarray, M) -> float:
    return _quadratic_norm(np.asarray(v, dtype=float), M)
