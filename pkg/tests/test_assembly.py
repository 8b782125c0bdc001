import numpy as np
import pytest

from lodcut.assembly import (
    RobinEdges,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    element_mass,
    element_stiffness,
    energy_norm,
    l2_norm,
    robin_matrix,
)
from lodcut.mesh import grid_cells, grid_nodes

REF = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])


def test_reference_element_stiffness():
    K = element_stiffness(REF)[0]
    expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    np.testing.assert_allclose(K, expected, atol=1e-15)


def test_reference_element_mass():
    M = element_mass(REF)[0]
    np.testing.assert_allclose(M, (np.ones((3, 3)) + np.eye(3)) / 24)


def test_stiffness_kills_constants_and_linear_energy():
    nodes, cells = grid_nodes(0, 0, 1, 4), grid_cells(4)
    K = assemble_stiffness(nodes, cells)
    np.testing.assert_allclose(K @ np.ones(len(nodes)), 0, atol=1e-13)
    u = 2 * nodes[:, 0] - nodes[:, 1]
    assert energy_norm(u, K) ** 2 == pytest.approx(5.0)  # |grad u|^2 * area


def test_mass_integrates_area():
    nodes, cells = grid_nodes(0, 0, 2, 3), grid_cells(3)
    M = assemble_mass(nodes, cells)
    one = np.ones(len(nodes))
    assert one @ M @ one == pytest.approx(4.0)
    assert l2_norm(nodes[:, 0], M) ** 2 == pytest.approx(2 * 8 / 3)  # int x^2 over [0,2]^2


def test_load_constant_and_quadratic():
    nodes, cells = grid_nodes(0, 0, 1, 2), grid_cells(2)
    b = assemble_load(nodes, cells, 3.0)
    assert b.sum() == pytest.approx(3.0)
    # degree-4 rule: int x^2 * sum(phi_i) = int x^2 = 1/3 exactly
    b2 = assemble_load(nodes, cells, lambda x, y: x**2)
    assert b2.sum() == pytest.approx(1 / 3, rel=1e-12)
    # and int x^2 * phi_i is exact for the P1 hats (degree 3 integrand)
    bx = assemble_load(nodes, cells, lambda x, y: x**2 * 0 + x * y)
    assert bx @ np.ones(len(nodes)) == pytest.approx(0.25, rel=1e-12)


def test_robin_whole_edge():
    nodes = np.array([[0.0, 0.0], [2.0, 0.0]])
    R = robin_matrix(nodes, RobinEdges.whole([0], [1], 3.0), 2).toarray()
    np.testing.assert_allclose(R, 3.0 * 2.0 / 6 * np.array([[2, 1], [1, 2]]))


def test_robin_pieces_add_up():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0]])
    whole = robin_matrix(nodes, RobinEdges.whole([0], [1], 1.0), 2).toarray()
    t = np.linspace(0, 1, 5)
    pieces = RobinEdges(np.zeros(4, int), np.ones(4, int), t[:-1], t[1:], np.ones(4))
    np.testing.assert_allclose(robin_matrix(nodes, pieces, 2).toarray(), whole, atol=1e-15)


def test_energy_norm_detects_broken_assembly():
    with pytest.raises(ArithmeticError):
        energy_norm(np.array([1.0, 0.0]), np.array([[-1.0, 0.0], [0.0, 1.0]]))


def test_energy_norm_homogeneous():
    nodes, cells = grid_nodes(0, 0, 1, 3), grid_cells(3)
    K = assemble_stiffness(nodes, cells)
    v = np.sin(nodes[:, 0] * 3)
    assert energy_norm(-2.5 * v, K) == pytest.approx(2.5 * energy_norm(v, K))
