from collections import deque

import numpy as np
import pytest
import scipy.sparse as sp

from lodcut.analysis import (
    TriMesh,
    condition_number,
    condition_scaling,
    loglog_slope,
    measure_decay,
    path_forest,
    pf_path_bound,
    pf_rayleigh,
    shape_mesh,
)
from lodcut.geometry import build_shape
from tests.conftest import make_problem


def test_condition_number_oracles():
    assert condition_number(np.eye(5)) == pytest.approx(1.0)
    assert condition_number(np.diag([1.0, 4.0])) == pytest.approx(4.0)
    A = sp.diags([np.linspace(1, 10, 3000)], [0])
    assert condition_number(A) == pytest.approx(10.0, rel=1e-6)


def test_condition_number_scale_invariant(rng):
    B = rng.standard_normal((20, 20))
    A = B @ B.T + 20 * np.eye(20)
    assert condition_number(7.5 * A) == pytest.approx(condition_number(A), rel=1e-10)


def test_condition_number_rejects_indefinite():
    with pytest.raises(np.linalg.LinAlgError):
        condition_number(np.diag([-1.0, 1.0]))


def test_slope_fit():
    H = 2.0 ** -np.arange(1, 5)
    assert loglog_slope(H, 3 * H**2) == pytest.approx(2.0)
    assert condition_scaling(H, H**-2.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        loglog_slope(H[:2], H[:2])


def _bfs_oracle(cells, touch):
    edges = {}
    for e, c in enumerate(cells):
        for a, b in ((c[0], c[1]), (c[1], c[2]), (c[2], c[0])):
            edges.setdefault(tuple(sorted((a, b))), []).append(e)
    nbr = [[] for _ in cells]
    for owners in edges.values():
        if len(owners) == 2:
            nbr[owners[0]].append(owners[1])
            nbr[owners[1]].append(owners[0])
    dist = np.full(len(cells), -1)
    q = deque()
    for e in np.flatnonzero(touch):
        dist[e] = 1
        q.append(e)
    while q:
        e = q.popleft()
        for f in nbr[e]:
            if dist[f] < 0:
                dist[f] = dist[e] + 1
                q.append(f)
    return dist


def test_path_forest_matches_bfs_oracle():
    shape = build_shape("LShape", 1 / 8)
    mesh = shape_mesh(shape)
    g = mesh.facets_on(shape.region.boundary)[:3]
    s, pred = path_forest(mesh, g)
    touch = np.isin(mesh.cells, np.unique(g)).any(axis=1)
    np.testing.assert_array_equal(s, _bfs_oracle(mesh.cells, touch))
    # predecessors step one closer to gamma
    has = pred >= 0
    np.testing.assert_array_equal(s[pred[has]], s[has] - 1)


def test_single_simplex_bound_is_one():
    mesh = TriMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    est = pf_path_bound(mesh, np.array([[0, 1]]))
    assert (est.s_max, est.r_max) == (1, 1)
    assert est.bound == pytest.approx(1.0)


def test_sawtooth_path_length_grows_like_teeth():
    vals = []
    for ks in (3, 4, 5):
        shape = build_shape("SawTooth", 2.0**-ks, teeth_exponent=ks, tooth_length=0.25)
        mesh = shape_mesh(shape)
        vals.append(pf_path_bound(mesh, mesh.facets_on(shape.gamma)).s_max / 2**ks)
    assert max(vals) / min(vals) < 1.5


def test_rayleigh_unit_square():
    # mean over the whole boundary: cos(pi x) is the minimizer, lambda = pi^2
    mesh = shape_mesh(build_shape("UnitSquare", 1 / 32))
    c = pf_rayleigh(mesh, mesh.boundary_facets())
    assert c == pytest.approx(1 / (np.sqrt(2) * np.pi), rel=1e-3)


def test_rayleigh_scale_invariant():
    mesh = shape_mesh(build_shape("UnitSquare", 1 / 8))
    big = TriMesh(3.0 * mesh.nodes, mesh.cells)
    g = mesh.boundary_facets()
    assert pf_rayleigh(big, g) == pytest.approx(pf_rayleigh(mesh, g), rel=1e-10)


def test_rayleigh_sparse_path_agrees_with_dense(monkeypatch):
    import lodcut.analysis as analysis

    mesh = shape_mesh(build_shape("LShape", 1 / 16))
    g = mesh.boundary_facets()
    dense = pf_rayleigh(mesh, g)
    monkeypatch.setattr(analysis, "DENSE_EIG_LIMIT", 10)
    assert pf_rayleigh(mesh, g) == pytest.approx(dense, rel=1e-6)


def test_decay_on_resolved_domain_is_zero():
    hier, space, _, problem = make_problem("UnitSquare", 3, 5, 1, "cut")
    x = space.free_nodes[len(space.free_nodes) // 2]
    rep = measure_decay(problem, int(x), 3)
    assert np.all(rep.errors < 1e-12)
    assert np.isnan(rep.slope)


def test_decay_on_lshape(lshape):
    hier, space, _, problem = lshape
    from lodcut.experiments import node_at

    rep = measure_decay(problem, node_at(hier, 0.5, 0.625), 4)
    assert rep.strictly_decreasing()
    assert rep.slope < 0
