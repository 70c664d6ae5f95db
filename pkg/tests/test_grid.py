import numpy as np
import pytest

from dem_solve.errors import FacetLookupError, InvalidBoundaryError, InvalidDiscretizationError
from dem_solve.grid import build_grid, build_hex_mesh, face_nodes, facet_area_and_normal


def test_beam_grid_node_count_and_ordering():
    grid = build_grid((37, 10, 10), (4.0, 1.0, 1.0))
    assert grid.n_nodes == 3700
    assert np.allclose(grid.coords[0], [0.0, 0.0, 0.0])
    assert np.allclose(grid.coords[1], [4.0 / 36, 0.0, 0.0])
    assert np.allclose(grid.coords[37], [0.0, 1.0 / 9, 0.0])
    assert np.allclose(grid.coords[grid.node_index(36, 9, 9)], [4.0, 1.0, 1.0])


def test_unit_cube_grid():
    grid = build_grid((3, 3, 3), (1.0, 1.0, 1.0))
    assert grid.n_nodes == 27
    assert np.allclose(grid.spacing, (0.5, 0.5, 0.5))


@pytest.mark.parametrize("dims,lengths", [((1, 3, 3), (1, 1, 1)), ((3, 3, 3), (1, 0, 1)), ((3, 3, 3), (1, -2, 1))])
def test_invalid_discretization(dims, lengths):
    with pytest.raises(InvalidDiscretizationError):
        build_grid(dims, lengths)


def test_beam_mesh_counts():
    mesh = build_hex_mesh(build_grid((37, 10, 10), (4.0, 1.0, 1.0)))
    assert mesh.n_elements == 2916
    assert mesh.facets_with_tag("x1").size == 81
    assert mesh.facets_with_tag("y0").size == 36 * 9


def test_facet_area_and_outward_normal():
    mesh = build_hex_mesh(build_grid((37, 10, 10), (4.0, 1.0, 1.0)))
    fid = int(mesh.facets_with_tag("x1")[0])
    area, normal = facet_area_and_normal(mesh, fid)
    assert area == pytest.approx((1.0 / 9) ** 2, rel=1e-12)
    assert np.allclose(normal, [1.0, 0.0, 0.0])

    for tag, expected in [("x0", [-1, 0, 0]), ("y0", [0, -1, 0]), ("y1", [0, 1, 0]), ("z0", [0, 0, -1]), ("z1", [0, 0, 1])]:
        _, n = facet_area_and_normal(mesh, int(mesh.facets_with_tag(tag)[3]))
        assert np.allclose(n, expected)


def test_facet_lookup_by_nodes_and_interior_quad():
    grid = build_grid((3, 3, 3), (1.0, 1.0, 1.0))
    mesh = build_hex_mesh(grid)
    fid = int(mesh.facets_with_tag("x1")[0])
    nodes = mesh.facet(fid).nodes
    area, _ = facet_area_and_normal(mesh, tuple(reversed(nodes)))
    assert area == pytest.approx(0.25)

    interior = (grid.node_index(1, 0, 0), grid.node_index(1, 1, 0), grid.node_index(1, 1, 1), grid.node_index(1, 0, 1))
    with pytest.raises(FacetLookupError):
        facet_area_and_normal(mesh, interior)
    with pytest.raises(FacetLookupError):
        mesh.facet(mesh.n_facets)


def test_face_nodes_lie_on_face():
    grid = build_grid((4, 3, 5), (2.0, 1.0, 3.0))
    plane = face_nodes(grid, "x1")
    assert plane.shape == (3, 5)
    assert np.allclose(grid.coords[plane.ravel(), 0], 2.0)
    plane = face_nodes(grid, "z0")
    assert plane.shape == (4, 3)
    assert np.allclose(grid.coords[plane.ravel(), 2], 0.0)


def test_unknown_surface_tag():
    mesh = build_hex_mesh(build_grid((3, 3, 3), (1.0, 1.0, 1.0)))
    assert mesh.n_facets == 24
    with pytest.raises(InvalidBoundaryError):
        mesh.facets_with_tag("top")


def test_elements_have_positive_volume():
    from dem_solve.assembly import SfOperator, volume_rule

    mesh = build_hex_mesh(build_grid((4, 3, 3), (3.0, 1.0, 2.0)))
    op = SfOperator(mesh, volume_rule("gauss_2x2x2"))
    assert np.all(op.dV_np > 0)
    assert op.dV_np.sum() == pytest.approx(6.0)


def test_facet_lookup_needs_four_nodes():
    mesh = build_hex_mesh(build_grid((3, 3, 3), (1.0, 1.0, 1.0)))
    nodes = mesh.facet(int(mesh.facets_with_tag("x1")[0])).nodes
    with pytest.raises(FacetLookupError):
        facet_area_and_normal(mesh, tuple(nodes[:3]))
    with pytest.raises(FacetLookupError):
        facet_area_and_normal(mesh, tuple(nodes) + (nodes[0],))


def test_tip_face_areas_sum_to_cross_section():
    mesh = build_hex_mesh(build_grid((9, 4, 4), (4.0, 1.0, 1.0)))
    fids = mesh.facets_with_tag("x1")
    assert fids.size == 9
    total = 0.0
    for fid in fids:
        area, normal = facet_area_and_normal(mesh, int(fid))
        assert np.allclose(normal, [1.0, 0.0, 0.0])
        total += area
    assert total == pytest.approx(1.0, rel=1e-12)
