import numpy as np
import pytest

from lodcut.clement import dense_projection_value


def test_projectivity_on_hats(lshape):
    _, space, clem, _ = lshape
    # lambda_x applied to the hat of y is delta_xy
    G = (clem.Lambda.T @ space.prolongation[:, space.free_nodes]).toarray()
    np.testing.assert_allclose(G, np.eye(len(space.free_nodes)), atol=1e-12)


def test_constant_on_interior_patch(lshape):
    hier, space, clem, _ = lshape
    c = clem.apply(np.ones(space.n_mixed))
    x = 4 + (hier.nc + 1) * 6  # (0.5, 0.75): patch fully inside
    assert c[x] == pytest.approx(1.0, abs=1e-12)


def test_zero_at_non_free_nodes(lshape):
    _, space, clem, _ = lshape
    c = clem.apply(np.random.default_rng(3).standard_normal(space.n_mixed))
    other = np.setdiff1d(np.arange(len(c)), space.free_nodes)
    assert np.all(c[other] == 0)


def test_matches_dense_oracle(cut_lshape, rng):
    _, space, clem, _ = cut_lshape
    v = space.to_mixed(rng.standard_normal(space.ndof))
    c = clem.apply(v)
    for x in space.free_nodes[:: max(1, len(space.free_nodes) // 12)]:
        assert c[x] == pytest.approx(dense_projection_value(space, int(x), v), abs=1e-12)


def test_kernel_characterization(cut_lshape, rng):
    _, space, clem, _ = cut_lshape
    C = clem.C.toarray()
    v = rng.standard_normal(space.ndof)
    # remove the range component: w = v - C (C^T C)^-1 C^T v lies in the kernel
    w = v - C @ np.linalg.solve(C.T @ C, C.T @ v)
    assert np.abs(clem.apply(space.to_mixed(w))).max() < 1e-12
    assert np.abs(clem.apply(space.to_mixed(v))).max() > 1e-3


def test_interpolation_estimate_stable_across_H():
    """||v - I_H v|| / (H ||grad v||) stays bounded (it may shrink) as H halves."""
    from tests.conftest import make_problem

    ratios = []
    for m in (2, 3, 4):
        hier, space, clem, _ = make_problem("UnitSquare", m, m + 2, 0, "full")
        xy = space.nodes
        v = np.sin(np.pi * xy[:, 0]) * np.sin(np.pi * xy[:, 1]) * np.exp(xy[:, 0])
        iv = clem.lift(clem.apply(v))
        err = np.sqrt((v - iv) @ space.M_mixed @ (v - iv))
        grad = np.sqrt(v @ space.K_mixed @ v)
        ratios.append(err / (hier.H * grad))
    assert max(ratios) < 0.2
    assert all(b <= a * 1.05 for a, b in zip(ratios, ratios[1:]))
