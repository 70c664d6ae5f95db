import numpy as np
import pytest

from dem_solve.detection import detect_localization
from dem_solve.grid import build_grid, build_hex_mesh


def test_zero_field_is_not_localized():
    mesh = build_hex_mesh(build_grid((5, 3, 3), (1.0, 1.0, 1.0)))
    flag, metric = detect_localization(np.zeros((mesh.grid.n_nodes, 3)), mesh)
    assert flag is False
    assert metric == 0.0


def test_jump_across_one_element_layer():
    grid = build_grid((10, 2, 2), (1.0, 1.0, 1.0))
    mesh = build_hex_mesh(grid)
    U = np.zeros((grid.n_nodes, 3))
    U[grid.coords[:, 0] > 0.5, 0] = 1.0
    flag, metric = detect_localization(U, mesh, "linear_elastic")
    assert metric == pytest.approx(9.0, rel=1e-12)
    assert flag is True


def test_threshold_override_and_non_finite_field():
    grid = build_grid((10, 2, 2), (1.0, 1.0, 1.0))
    mesh = build_hex_mesh(grid)
    U = np.zeros((grid.n_nodes, 3))
    U[grid.coords[:, 0] > 0.5, 0] = 1.0
    assert detect_localization(U, mesh, threshold=10.0)[0] is False
    U[0, 0] = np.nan
    flag, metric = detect_localization(U, mesh)
    assert flag is True and metric == float("inf")
