import numpy as np
import pytest

from lodcut.geometry import (
    DIRICHLET,
    NEUMANN,
    CellClass,
    Circular,
    Horizontal,
    ResolutionError,
    Robin,
    build_shape,
    classify_coarse_cells,
    cut_l_shape,
    export_boundary_csv,
    fine_barycenters,
    fractal_squares,
)


def test_lshape_area_and_corner():
    s = build_shape("LShape", 1 / 16)
    assert s.area == pytest.approx(0.75)
    assert s.singular_points == ((0.5, 0.5),)
    assert s.contains(np.array([[0.25, 0.25], [0.75, 0.75]])).all()
    assert not s.contains(np.array([[0.75, 0.25]])).any()


def test_fractal_square_count_and_area():
    sq = fractal_squares(3)
    assert len(sq) == 1 + 3 + 9 + 27
    s = build_shape("Fractal", 2**-6, levels=3)
    # no overlaps up to three levels: area is the sum of the squares
    assert s.area == pytest.approx(1 + 3 / 4 + 9 / 16 + 27 / 64)
    assert s.box == (-1.0, -0.5, 3.0)


def test_fractal_tags():
    s = build_shape("Fractal", 2**-6, levels=2, kappa=10)
    d, kappa = s.tag_arrays(np.array([[0.5, 0.0], [0.0, 0.5], [0.5, 1.0]]))
    assert d.tolist() == [True, True, False]
    assert kappa[2] == 10


def test_fractal_needs_fine_enough_h():
    with pytest.raises(ResolutionError):
        build_shape("Fractal", 2**-3, levels=3)


def test_sawtooth_teeth_and_tags():
    s = build_shape("SawTooth", 2**-6, teeth_exponent=4, teeth_bc="N")
    eta = 1 / 16
    assert s.area == pytest.approx(0.75 + 0.25 * 0.5)
    assert s.contains(np.array([[0.9, eta / 2]]))[0]
    assert not s.contains(np.array([[0.9, 1.5 * eta]]))[0]
    assert s.tag_at(np.array([[0.9, eta]]))[0] == NEUMANN
    assert s.tag_at(np.array([[0.0, 0.5]]))[0] == DIRICHLET


def test_cut_lshape_straight():
    s = cut_l_shape(Horizontal(1 / 16), 1 / 64, bc="DN")
    assert s.area == pytest.approx(0.75 - 0.5 / 16)
    assert s.tag_at(np.array([[1 - 1 / 16, 0.75]]))[0] == DIRICHLET
    assert s.tag_at(np.array([[0.0, 0.5]]))[0] == NEUMANN


def test_cut_lshape_ball_removes_corner():
    s = cut_l_shape(Circular((0.5, 0.5), 1 / 8), 1 / 64, bc="ND")
    assert not s.contains(np.array([[0.52, 0.52]]))[0]
    assert s.area < 0.75
    # the ball is rasterized on the fine lattice: area stays a multiple of h^2/2
    assert (s.area / (0.5 / 64**2)) == pytest.approx(round(s.area / (0.5 / 64**2)))


def test_cut_bc_validation():
    with pytest.raises(ValueError):
        cut_l_shape(Horizontal(1 / 16), 1 / 64, bc="DX")


def test_pure_neumann_rejected():
    from lodcut.geometry import unit_square

    with pytest.raises(ValueError):
        unit_square(1 / 4, tag=NEUMANN)
    assert unit_square(1 / 4, tag=Robin(1.0)).default_tag.kappa == 1.0


def test_barycenters_and_classification():
    bc = fine_barycenters(0.0, 0.0, 2, 0.5)
    assert bc.shape == (8, 2)
    np.testing.assert_allclose(bc[0], [1 / 3, 1 / 6])
    np.testing.assert_allclose(bc[1], [1 / 6, 1 / 3])
    inside = np.array([True, True, True, False])
    parent = np.array([0, 0, 1, 1])
    cls = classify_coarse_cells(inside, parent, 3)
    assert cls.tolist() == [CellClass.INTERIOR, CellClass.CUT, CellClass.OUTSIDE]


def test_unknown_shape():
    with pytest.raises(ValueError):
        build_shape("Torus", 0.1)


def test_boundary_csv(tmp_path):
    s = build_shape("LShape", 1 / 4)
    export_boundary_csv(s, tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "x0,y0,x1,y1,kind,kappa"
    assert len(lines) - 1 == 16  # perimeter 4 in pieces of 1/4
