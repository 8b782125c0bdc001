import numpy as np
import pytest

from lodcut.geometry import CellClass, build_shape
from lodcut.mesh import (
    AssumptionViolated,
    build_hierarchy,
    check_interior_vertex_assumption,
    export_mesh_csv,
    grid_cells,
    grid_nodes,
    layer_patch,
)


def test_grid_cells_orientation():
    cells = grid_cells(2)
    nodes = grid_nodes(0, 0, 1, 2)
    assert cells.shape == (8, 3)
    d1 = nodes[cells[:, 1]] - nodes[cells[:, 0]]
    d2 = nodes[cells[:, 2]] - nodes[cells[:, 0]]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    assert np.all(det > 0)
    assert np.allclose(0.5 * det.sum(), 1.0)


def test_lshape_hierarchy_classes():
    hier = build_hierarchy(build_shape("LShape", 1 / 16), 2, 4)
    # the L-shape is resolved by H = 1/4: no cut cells, a quarter outside
    assert (hier.cell_class == CellClass.CUT).sum() == 0
    assert (hier.cell_class == CellClass.OUTSIDE).sum() == 8
    assert not hier.zone.any()
    assert hier.ratio == 4


def test_cut_cells_and_zone_growth():
    from lodcut.geometry import Horizontal

    shape = build_shape("CutLShape", 1 / 32, cut=Horizontal(1 / 16), bc="DD")
    hier = build_hierarchy(shape, 3, 5, k=1)
    cut = hier.cell_class == CellClass.CUT
    assert cut.sum() == 8  # one column of four squares, two triangles each
    assert np.array_equal(hier.zone0, cut)
    assert hier.zone.sum() > cut.sum()
    assert np.all(hier.zone <= hier.active)


def test_enrichment_modes():
    shape = build_shape("LShape", 1 / 32)
    full = build_hierarchy(shape, 3, 5, 0, "full")
    assert np.array_equal(full.zone, full.active)
    box = build_hierarchy(shape, 3, 5, 0, "box", box_halfwidth=1 / 8)
    centers = full.coarse_nodes[full.coarse_cells].mean(axis=1)
    assert np.all(np.abs(centers[box.zone] - 0.5).max(axis=1) < 1 / 8)
    with pytest.raises(ValueError):
        build_hierarchy(shape, 3, 5, 0, "nowhere")


def test_layer_patch_growth_is_monotone():
    hier = build_hierarchy(build_shape("UnitSquare", 1 / 16), 3, 4)
    node = 4 + 9 * 4  # center node
    sizes = [len(layer_patch(hier, node, L)) for L in range(10)]
    assert sizes[0] == 6
    assert all(a <= b for a, b in zip(sizes, sizes[1:]))
    assert sizes[1] > sizes[0]
    assert sizes[-1] == hier.active.sum()
    with pytest.raises(ValueError):
        layer_patch(hier, node, -1)


def test_fine_parent_consistency():
    hier = build_hierarchy(build_shape("UnitSquare", 1 / 16), 2, 4)
    from lodcut.geometry import fine_barycenters
    from lodcut.space import barycentric

    bary = fine_barycenters(0, 0, hier.nf, hier.h)
    tri = hier.coarse_nodes[hier.coarse_cells[hier.fine_parent]]
    lam = barycentric(tri, bary[:, None, :])[:, 0]
    assert np.all(lam > 0)


def test_interior_vertex_assumption():
    hier = build_hierarchy(build_shape("LShape", 1 / 16), 2, 4)
    assert len(check_interior_vertex_assumption(hier)) == 0
    # fractal at H = 1/2: small squares sit in cells far from interior cells
    hier = build_hierarchy(build_shape("Fractal", 1 / 16, levels=3), 1, 4)
    bad = check_interior_vertex_assumption(hier, strict=False)
    assert len(bad) > 0
    with pytest.raises(AssumptionViolated):
        check_interior_vertex_assumption(hier)


def test_levels_validated():
    shape = build_shape("UnitSquare", 1 / 16)
    with pytest.raises(ValueError):
        build_hierarchy(shape, 4, 3)
    from lodcut.geometry import ResolutionError

    with pytest.raises(ResolutionError):
        build_hierarchy(shape, 2, 3)  # coarser than the shape was built for


def test_export_mesh(tmp_path):
    hier = build_hierarchy(build_shape("LShape", 1 / 4), 2, 2)
    export_mesh_csv(hier, tmp_path / "m")
    cells = (tmp_path / "m_cells.csv").read_text().splitlines()
    assert cells[0] == "cell,v0,v1,v2,class,active,zone0,zone"
    assert len(cells) == 33
