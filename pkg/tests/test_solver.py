import numpy as np
import pytest

from lodcut.corrector import build_basis
from lodcut.solver import export_solution_csv, relative_energy_error, solve_lod, solve_reference
from tests.conftest import make_problem

# u(1/2, 1/2) for -lap u = 1 on the unit square, zero Dirichlet data, from the
# double sine series summed to convergence
CENTER_VALUE = 0.0736713512666702


def test_zero_load_gives_zero(lshape):
    _, space, _, problem = lshape
    assert np.all(solve_reference(space, 0.0).fine == 0)
    basis = build_basis(problem, 1)
    assert np.all(solve_lod(space, basis, 0.0).fine == 0)


def test_unit_square_center_value():
    hier, space, _, _ = make_problem("UnitSquare", 2, 6, 0, "full")
    u = solve_reference(space, 1.0).mixed(space)
    c = np.flatnonzero(np.all(np.isclose(space.nodes, 0.5), axis=1))
    assert len(c) == 1
    assert u[c[0]] == pytest.approx(CENTER_VALUE, rel=2e-3)


def test_relative_energy_error_basics(lshape, rng):
    _, space, _, _ = lshape
    b = rng.standard_normal(space.ndof)
    assert relative_energy_error(b, b, space.K) == 0.0
    assert relative_energy_error(b, 2 * b, space.K) == pytest.approx(0.5)
    with pytest.raises(ZeroDivisionError):
        relative_energy_error(b, np.zeros_like(b), space.K)


def test_galerkin_optimality(lshape, rng):
    _, space, _, problem = lshape
    basis = build_basis(problem, 2)
    ref = solve_reference(space).fine
    lod = solve_lod(space, basis)
    best = relative_energy_error(lod.fine, ref, space.K)
    for _ in range(5):
        c = lod.coefficients + 0.01 * rng.standard_normal(len(lod.coefficients))
        assert relative_energy_error(basis.Phi @ c, ref, space.K) >= best
    assert lod.residual < 1e-10


def test_global_lod_close_to_reference(lshape):
    _, space, _, problem = lshape
    ref = solve_reference(space).fine
    err_glob = relative_energy_error(solve_lod(space, build_basis(problem, None)).fine, ref, space.K)
    err_loc = relative_energy_error(solve_lod(space, build_basis(problem, 3)).fine, ref, space.K)
    assert err_glob < 0.2
    assert err_loc <= err_glob * 1.05


def test_solution_csv(tmp_path, lshape):
    _, space, _, _ = lshape
    ref = solve_reference(space)
    export_solution_csv(space, ref.fine, tmp_path / "u.csv")
    data = np.loadtxt(tmp_path / "u.csv", delimiter=",", skiprows=1)
    assert data.shape == (space.n_mixed, 3)
    np.testing.assert_allclose(data[:, 2], ref.mixed(space), rtol=1e-14, atol=1e-300)
