import numpy as np
import pytest

from lodcut.geometry import build_shape
from lodcut.mesh import build_hierarchy
from lodcut.space import build_space


def test_mass_matches_area(lshape, cut_lshape):
    for _, space, _, _ in (lshape, cut_lshape):
        one = np.ones(space.n_mixed)
        assert one @ space.M_mixed @ one == pytest.approx(space.hierarchy.shape.area)


def test_stiffness_symmetric_and_dof_matrices(lshape):
    _, space, _, _ = lshape
    K = space.K_mixed
    assert abs(K - K.T).max() < 1e-14
    assert space.K.shape == (space.ndof, space.ndof)
    # E is the identity on fine DOFs
    fine_cols = space.E[:, len(space.coarse_dofs):]
    assert fine_cols.nnz == len(space.fine_dofs)


def test_hanging_nodes_follow_coarse_interpolant(cut_lshape):
    _, space, _, _ = cut_lshape
    rng = np.random.default_rng(0)
    c = rng.standard_normal(space.ndof)
    v = space.to_mixed(c)
    hang = np.flatnonzero(space.constrained)
    assert len(hang) > 0
    coarse = np.zeros(space.prolongation.shape[1])
    coarse[space.coarse_dofs] = c[: len(space.coarse_dofs)]
    np.testing.assert_allclose(v[hang], (space.prolongation @ coarse)[hang], atol=1e-14)


def test_dirichlet_values_vanish(cut_lshape):
    _, space, _, _ = cut_lshape
    v = space.to_mixed(np.ones(space.ndof))
    assert np.all(v[space.dirichlet] == 0)
    assert space.dirichlet.sum() > 0


def test_lifted_hats_match_hats_off_dirichlet(lshape):
    _, space, _, _ = lshape
    T = space.E @ space.lifted_hats
    P = space.prolongation[:, space.free_nodes]
    keep = ~space.dirichlet
    assert abs(T[keep] - P[keep]).max() < 1e-14


def test_free_nodes_exclude_dirichlet_and_outside():
    shape = build_shape("LShape", 1 / 16)
    hier = build_hierarchy(shape, 2, 4, 0)
    space = build_space(hier)
    xy = hier.coarse_nodes[space.free_nodes]
    # only the five interior nodes of the L-shape at H = 1/4
    assert len(xy) == 5
    assert shape.contains(xy).all()


def test_interior_rule_drops_nodes_beyond_the_cut():
    from lodcut.geometry import Horizontal

    shape = build_shape("CutLShape", 1 / 32, cut=Horizontal(1 / 16), bc="ND")
    hier = build_hierarchy(shape, 3, 5, 1)
    sup = build_space(hier, "support")
    inn = build_space(hier, "interior")
    assert set(inn.free_nodes) < set(sup.free_nodes)
    assert np.all(hier.coarse_nodes[inn.free_nodes][:, 0] < 1 - 1 / 16)
    with pytest.raises(ValueError):
        build_space(hier, "everything")


def test_robin_boundary_on_fractal():
    shape = build_shape("Fractal", 1 / 16, levels=1, kappa=10)
    hier = build_hierarchy(shape, 1, 4, 1, "full")
    space = build_space(hier)
    r = space.robin
    lengths = np.linalg.norm(space.nodes[r.b] - space.nodes[r.a], axis=1) * (r.t1 - r.t0)
    robin_len = lengths[r.kappa > 0].sum()
    # the children hide half of the root's left and right sides, so the
    # exposed Dirichlet part is 1 (bottom) + 0.5 + 0.5
    assert shape.region.length == pytest.approx(7.0)
    assert robin_len == pytest.approx(7.0 - 2.0)
