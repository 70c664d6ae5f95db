import numpy as np
import pytest
import torch

from dem_solve.diffengine import DiffProgram
from dem_solve.errors import ContractError
from dem_solve.evaluate import fd_gradient_audit, relative_difference


def test_identical_fields():
    U = np.random.default_rng(0).standard_normal((6, 3))
    rd = relative_difference(U, U)
    assert not np.any(rd.per_node)
    assert rd.mean == 0.0
    assert rd.absolute == []


def test_single_node_percent():
    rd = relative_difference([[0.0, -0.9, 0.0]], [[1.0, -1.0, 2.0]])
    assert rd.per_node[0, 1] == pytest.approx(10.0)
    assert rd.per_node[0, 0] == pytest.approx(100.0)
    assert rd.component_means[1] == pytest.approx(10.0)


def test_zero_reference_component_uses_absolute_difference():
    U_ref = np.array([[1.0, 1.0, 0.0], [2.0, 1.0, 0.0]])
    U_nn = np.array([[1.0, 1.0, 0.3], [2.0, 1.0, 0.0]])
    rd = relative_difference(U_nn, U_ref)
    assert rd.absolute == ["z"]
    assert rd.per_node[0, 2] == pytest.approx(0.3)
    assert rd.summary()["absolute_components"] == ["z"]


def test_shape_mismatch():
    with pytest.raises(ContractError):
        relative_difference(np.zeros((3, 3)), np.zeros((4, 3)))


def test_fd_audit_of_quadratic():
    c = torch.tensor([0.5, -1.0, 2.0], dtype=torch.float64)
    prog = DiffProgram(fn=lambda t: ((t - c) ** 2).sum() + t[0] * t[1], n_params=3)
    assert fd_gradient_audit(prog, np.array([0.1, 0.2, 0.3]), n_probes=5) < 1e-9
