import numpy as np
import pytest
import torch

from dem_solve.diffengine import (
    DiffProgram,
    as_tensor,
    det3,
    evaluate,
    frac_pow,
    input_directional_derivative,
    value_and_parameter_gradient,
)
from dem_solve.errors import ContractError, InvertedElementError, NonFiniteLossError
from dem_solve.evaluate import fd_gradient_audit
from dem_solve.models import Backbone, NetworkSpec, init_params

C = np.array([1.0, -2.0, 0.5, 3.0])


def _bowl():
    c = torch.as_tensor(C)
    return DiffProgram(fn=lambda t: ((t - c) ** 2).sum(), n_params=4, name="bowl")


def test_value_and_gradient_of_quadratic():
    value, grad = value_and_parameter_gradient(_bowl(), np.zeros(4))
    assert value == pytest.approx(float(C @ C))
    assert np.allclose(grad, -2.0 * C)
    assert evaluate(_bowl(), C) == 0.0


def test_parameter_count_mismatch():
    with pytest.raises(ContractError):
        value_and_parameter_gradient(_bowl(), np.zeros(3))


def test_non_finite_loss_is_reported_with_operation():
    prog = DiffProgram(fn=lambda t: torch.log(t).sum(), n_params=2, name="log")
    with pytest.raises(NonFiniteLossError) as info:
        value_and_parameter_gradient(prog, np.array([-1.0, 1.0]))
    assert "log" in info.value.op


def test_det3_matches_linalg():
    F = torch.as_tensor(np.random.default_rng(0).standard_normal((7, 3, 3)))
    assert torch.allclose(det3(F), torch.linalg.det(F), atol=1e-12)


def test_frac_pow_rejects_nonpositive():
    assert float(frac_pow(as_tensor([8.0]), 1.0 / 3.0)) == pytest.approx(2.0)
    with pytest.raises(InvertedElementError):
        frac_pow(as_tensor([1.0, -0.1]), -2.0 / 3.0)


def _mlp():
    spec = NetworkSpec(kind="mlp", layer_widths=(3, 6, 5, 3), seed=3)
    return Backbone(spec), as_tensor(init_params(spec).theta)


def test_input_directional_derivative_matches_finite_differences():
    backbone, theta = _mlp()
    rng = np.random.default_rng(1)
    X = as_tensor(rng.random((9, 3)))
    d = as_tensor(rng.standard_normal((9, 3)))
    jvp = input_directional_derivative(backbone.net_eval(theta), X, d)
    h = 1e-6
    with torch.no_grad():
        up, _ = backbone.forward(theta, X + h * d)
        down, _ = backbone.forward(theta, X - h * d)
    assert torch.allclose(jvp.detach(), (up - down) / (2 * h), atol=1e-8)


def test_input_directional_derivative_shape_check():
    backbone, theta = _mlp()
    with pytest.raises(ContractError):
        input_directional_derivative(backbone.net_eval(theta), torch.zeros(4, 3), torch.zeros(4, 2))


def test_parameter_gradient_through_input_derivative():
    backbone, theta = _mlp()
    X = as_tensor(np.random.default_rng(2).random((6, 3)))
    d = torch.zeros(6, 3, dtype=torch.float64)
    d[:, 0] = 1.0

    def fn(t):
        return (input_directional_derivative(backbone.net_eval(t), X, d) ** 2).sum()

    prog = DiffProgram(fn=fn, n_params=theta.shape[0], name="nested")
    assert fd_gradient_audit(prog, theta.numpy(), n_probes=5) < 1e-6
