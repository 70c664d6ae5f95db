import logging

import numpy as np
import pytest
import torch

from dem_solve.assembly import (
    DemProblem,
    SfOperator,
    TractionSpec,
    composite_weights,
    demo_1d,
    external_work,
    loss,
    nodal_gradients_ad,
    nodal_quadrature_weights,
    shape_gradients,
    traction_weights,
    volume_rule,
)
from dem_solve.diffengine import as_tensor
from dem_solve.errors import InvalidBoundaryError
from dem_solve.evaluate import fd_gradient_audit
from dem_solve.graph import build_graph
from dem_solve.grid import build_grid, build_hex_mesh
from dem_solve.materials import LinearElastic, NeoHookean
from dem_solve.models import Backbone, NetworkSpec, constrained_eval, dirichlet_for_face, init_params
from dem_solve.reference import assemble_stiffness

A = np.array([[0.1, -0.2, 0.05], [0.3, 0.0, -0.1], [0.02, 0.04, 0.2]])
LOAD = [TractionSpec("x1", (0.0, -2.5, 0.0))]


def _mesh(dims=(4, 3, 3), lengths=(2.0, 1.0, 1.5)):
    return build_hex_mesh(build_grid(dims, lengths))


def _problem(mesh, material=None, mode="sf", rule="gauss_2x2x2"):
    material = material or LinearElastic(1000.0, 0.3)
    bc = dirichlet_for_face(mesh.grid, "x0")
    return DemProblem(mesh, material, LOAD, bc, gradient_mode=mode, volume_quadrature=rule)


def test_shape_gradients_exact_on_linear_fields():
    mesh = _mesh()
    U = mesh.grid.coords @ A.T + np.array([1.0, 2.0, 3.0])
    for element_id in (0, mesh.n_elements - 1):
        for B, detJ in shape_gradients(mesh, element_id, volume_rule("gauss_2x2x2")):
            gradu = U[mesh.elements[element_id]].T @ B
            assert np.allclose(gradu, A, rtol=0, atol=1e-12)
            assert detJ > 0
    op = SfOperator(mesh, volume_rule("gauss_1"))
    assert np.allclose(op.gradients(as_tensor(U)).numpy(), A, atol=1e-12)


def test_sf_energy_is_quadratic_form_of_stiffness():
    mesh = _mesh((3, 3, 3), (1.0, 1.0, 1.0))
    problem = _problem(mesh)
    U = np.random.default_rng(0).standard_normal((mesh.grid.n_nodes, 3)) * 0.01
    K = assemble_stiffness(problem)
    u = U.ravel()
    internal = float(problem.internal_energy(as_tensor(U)))
    assert internal == pytest.approx(0.5 * u @ (K @ u), rel=1e-10)


def test_composite_weights():
    assert composite_weights(37, 4.0 / 36, "trapezoid").sum() == pytest.approx(4.0)
    assert composite_weights(5, 0.25, "simpson").sum() == pytest.approx(1.0)
    grid = build_grid((37, 10, 10), (4.0, 1.0, 1.0))
    assert nodal_quadrature_weights(grid, "trapezoid").sum() == pytest.approx(4.0)


def test_simpson_falls_back_on_even_axis(caplog):
    with caplog.at_level(logging.WARNING):
        w = composite_weights(4, 1.0 / 3, "simpson", "x")
    assert np.allclose(w, composite_weights(4, 1.0 / 3, "trapezoid"))
    assert "Simpson" in caplog.text


def test_traction_weights_integrate_face_area():
    mesh = _mesh()
    for mode in ("sf", "ad_trapezoid"):
        ids, w = traction_weights(mesh, "x1", mode)
        assert np.allclose(mesh.grid.coords[ids, 0], 2.0)
        assert w.sum() == pytest.approx(1.5)


def test_external_work_of_rigid_translation():
    mesh = _mesh((3, 3, 3), (1.0, 1.0, 1.0))
    U = np.tile([0.0, 1.0, 0.0], (mesh.grid.n_nodes, 1))
    assert float(external_work(U, mesh, LOAD[0])) == pytest.approx(-2.5)
    with pytest.raises(InvalidBoundaryError):
        TractionSpec("top", (0.0, 1.0, 0.0))


def test_ad_and_sf_energies_agree_on_linear_field():
    mesh = _mesh()
    problem = _problem(mesh, mode="ad")
    At = torch.as_tensor(A)

    def net_eval(X, tangents):
        return X @ At.T, [t @ At.T for t in tangents]

    U = problem.X @ At.T
    assert float(problem.ad_potential(net_eval)) == pytest.approx(float(problem.potential_energy(U)), rel=1e-10)


def test_bypass_hook_matches_sf_loss_field():
    mesh = _mesh((3, 3, 3), (1.0, 1.0, 1.0))
    problem = _problem(mesh)
    spec = NetworkSpec(kind="mlp", layer_widths=(3, 6, 3), seed=0)
    prog = loss(problem, Backbone(spec))
    theta = as_tensor(init_params(spec).theta)
    with torch.no_grad():
        assert float(prog(theta)) == pytest.approx(float(problem.potential_energy(prog.field(theta))))
        assert torch.all(prog.field(theta)[torch.as_tensor(mesh.grid.coords[:, 0] == 0.0)] == 0)


def test_sf_loss_gradient_audit():
    mesh = _mesh((3, 3, 3), (1.0, 1.0, 1.0))
    problem = _problem(mesh)
    spec = NetworkSpec(kind="gcn", layer_widths=(3, 6, 6, 3), cheb_order=2, seed=1)
    prog = loss(problem, Backbone(spec, build_graph(mesh.grid)))
    assert prog.name == "gcn-sf"
    assert fd_gradient_audit(prog, init_params(spec).theta, n_probes=10) < 1e-5


def test_ad_neohookean_loss_gradient_audit():
    mesh = _mesh((3, 3, 3), (1.0, 1.0, 1.0))
    problem = _problem(mesh, NeoHookean(192.31, 0.0024), mode="ad")
    spec = NetworkSpec(kind="mlp", layer_widths=(3, 6, 6, 3), seed=2)
    prog = loss(problem, Backbone(spec))
    theta = 0.1 * init_params(spec).theta
    assert fd_gradient_audit(prog, theta, n_probes=10) < 1e-4


def test_demo_1d_closed_forms():
    assert demo_1d(0.0, "ad_trapezoid") == pytest.approx(-0.5, abs=1e-12)
    assert demo_1d(0.0, "sf_gauss1") == pytest.approx(-0.5, abs=1e-12)
    assert demo_1d(0.5, "ad_trapezoid") == pytest.approx(-1.0, abs=1e-6)
    assert demo_1d(0.5, "sf_gauss1") == pytest.approx(-0.375, abs=1e-6)
    with pytest.raises(ValueError):
        demo_1d(0.5, "simpson")


def test_external_work_is_linear_and_schemes_agree_on_affine_fields():
    mesh = _mesh()
    traction = TractionSpec("x1", (0.3, -2.5, 1.1))
    U = np.random.default_rng(3).standard_normal((mesh.grid.n_nodes, 3))
    for mode in ("sf", "ad_trapezoid"):
        w = float(external_work(U, mesh, traction, mode))
        assert float(external_work(-2.5 * U, mesh, traction, mode)) == pytest.approx(-2.5 * w, rel=1e-12)

    affine = mesh.grid.coords @ A.T + np.array([0.5, -1.0, 2.0])
    sf = float(external_work(affine, mesh, traction, "sf"))
    ad = float(external_work(affine, mesh, traction, "ad_trapezoid"))
    assert sf == pytest.approx(ad, rel=1e-12)


def test_clamped_field_has_no_in_plane_gradient_on_root():
    mesh = _mesh()
    bc = dirichlet_for_face(mesh.grid, "x0")
    spec = NetworkSpec(kind="mlp", layer_widths=(3, 8, 3), seed=4)
    net_eval = constrained_eval(Backbone(spec).net_eval(as_tensor(init_params(spec).theta)), bc)
    with torch.no_grad():
        gradu = nodal_gradients_ad(net_eval, mesh.grid.coords)
    root = torch.as_tensor(mesh.grid.coords[:, 0] == 0.0)
    assert gradu.shape == (mesh.grid.n_nodes, 3, 3)
    assert torch.all(gradu[root][:, :, 1:] == 0)
    assert torch.any(gradu[root][:, :, 0] != 0)


@pytest.mark.parametrize("mode", ["sf", "ad"])
@pytest.mark.parametrize("material", [LinearElastic(1000.0, 0.3), NeoHookean(192.31, 0.0024)])
def test_loss_vanishes_at_zero_parameters(mode, material):
    mesh = _mesh((3, 3, 3), (1.0, 1.0, 1.0))
    spec = NetworkSpec(kind="gcn", layer_widths=(3, 6, 3), cheb_order=2, seed=0)
    prog = loss(_problem(mesh, material, mode), Backbone(spec, build_graph(mesh.grid)))
    with torch.no_grad():
        assert float(prog(torch.zeros(prog.n_params, dtype=torch.float64))) == 0.0


def _smooth_field(X, tangents):
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    U = 0.01 * torch.stack([torch.sin(x) * y, x * x * z, torch.cos(y) * x], dim=1)
    zero = torch.zeros_like(x)
    G = 0.01 * torch.stack(
        [
            torch.stack([torch.cos(x) * y, torch.sin(x), zero], dim=1),
            torch.stack([2.0 * x * z, zero, x * x], dim=1),
            torch.stack([torch.cos(y), -x * torch.sin(y), zero], dim=1),
        ],
        dim=1,
    )
    return U, [torch.einsum("nij,nj->ni", G, t) for t in tangents]


def test_sf_and_ad_potentials_converge_together_at_second_order():
    gaps = []
    for n in (5, 9, 17):
        problem = _problem(_mesh((n, n, n), (1.0, 1.0, 1.0)), mode="ad")
        U, _ = _smooth_field(problem.X, [])
        gaps.append(abs(float(problem.ad_potential(_smooth_field)) - float(problem.potential_energy(U))))
    assert gaps[0] > gaps[1] > gaps[2] > 0
    assert gaps[1] / gaps[2] > 2.5
