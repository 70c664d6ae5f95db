"""
Potential-energy assembly.

Two gradient engines share one loss shape, internal energy minus external work:

* SF mode differentiates the nodal field with trilinear hex shape functions and
  integrates with Gauss quadrature on the elements.
* AD mode differentiates the network with respect to its inputs at the nodes
  and integrates with a composite rule over the structured grid.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch

from .diffengine import DTYPE, DiffProgram, NetEval, as_tensor, axis_seeds
from .errors import InvalidBoundaryError, InvertedElementError
from .grid import FACE_TAGS, HEX_CORNERS, IN_PLANE, HexMesh, NodeGrid, face_nodes
from .materials import MaterialModel
from .models import Backbone, DirichletBC, constrained_eval, param_count

logger = logging.getLogger(__name__)

VOLUME_RULES = ("gauss_1", "gauss_2x2x2")
AD_SCHEMES = ("trapezoid", "simpson")
GRADIENT_MODES = ("sf", "ad")

_CORNER_SIGNS = (2 * HEX_CORNERS - 1).astype(np.float64)
_QUAD_SIGNS = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=np.float64)


@dataclass(frozen=True)
class QuadratureRule:
    mode: str
    points: np.ndarray
    weights: np.ndarray


def volume_rule(mode: str = "gauss_2x2x2") -> QuadratureRule:
    if mode == "gauss_1":
        return QuadratureRule(mode, np.zeros((1, 3)), np.array([8.0]))
    if mode == "gauss_2x2x2":
        g = 1.0 / math.sqrt(3.0)
        pts = np.array([[a * g, b * g, c * g] for c in (-1, 1) for b in (-1, 1) for a in (-1, 1)])
        return QuadratureRule(mode, pts, np.ones(8))
    raise ValueError(f"volume quadrature must be one of {VOLUME_RULES}, got {mode!r}")


def facet_rule() -> QuadratureRule:
    g = 1.0 / math.sqrt(3.0)
    pts = np.array([[a * g, b * g] for b in (-1, 1) for a in (-1, 1)])
    return QuadratureRule("gauss_2x2", pts, np.ones(4))


@dataclass(frozen=True)
class TractionSpec:
    surface: str
    traction: Tuple[float, float, float]

    def __post_init__(self):
        if self.surface not in FACE_TAGS:
            raise InvalidBoundaryError(f"unknown traction surface '{self.surface}'")
        object.__setattr__(self, "traction", tuple(float(c) for c in self.traction))


def hex_shape_derivatives(xi: np.ndarray) -> np.ndarray:
    """dN_a / dxi_j of the 8 trilinear shape functions at one natural point, shape (8, 3)."""
    s = _CORNER_SIGNS
    f = 1.0 + s * np.asarray(xi)[None, :]
    return 0.125 * np.stack(
        [s[:, 0] * f[:, 1] * f[:, 2], f[:, 0] * s[:, 1] * f[:, 2], f[:, 0] * f[:, 1] * s[:, 2]],
        axis=1,
    )


def _element_gradients(Xe: np.ndarray, rule: QuadratureRule) -> Tuple[np.ndarray, np.ndarray]:
    """Physical shape gradients (E, G, 8, 3) and det J (E, G) for element coordinates (E, 8, 3)."""
    dN = np.stack([hex_shape_derivatives(p) for p in rule.points])  # (G, 8, 3)
    J = np.einsum("eai,gaj->egij", Xe, dN)
    detJ = np.linalg.det(J)
    if np.any(detJ <= 0):
        raise InvertedElementError("shape_gradients")
    B = np.einsum("gaj,egji->egai", dN, np.linalg.inv(J))
    return B, detJ


def shape_gradients(mesh: HexMesh, element_id: int, rule: QuadratureRule) -> List[Tuple[np.ndarray, float]]:
    """
    Shape-function gradients of one element at its quadrature points.

    Returns:
        One (dphi/dx (8 x 3), det J) pair per quadrature point.
    """
    Xe = mesh.grid.coords[mesh.elements[element_id]][None]
    B, detJ = _element_gradients(Xe, rule)
    return [(B[0, g], float(detJ[0, g])) for g in range(len(rule.weights))]


class SfOperator:
    """Precomputed element gradient operators and volume weights of a mesh."""

    def __init__(self, mesh: HexMesh, rule: QuadratureRule):
        self.mesh = mesh
        self.rule = rule
        B, detJ = _element_gradients(mesh.grid.coords[mesh.elements], rule)
        self.B_np = B
        self.dV_np = detJ * rule.weights[None, :]
        self.B = torch.as_tensor(B, dtype=DTYPE)
        self.dV = torch.as_tensor(self.dV_np, dtype=DTYPE)
        self.elements = torch.as_tensor(np.array(mesh.elements), dtype=torch.long)

    def gradients(self, U: torch.Tensor) -> torch.Tensor:
        """grad u at every (element, point), shape (E, G, 3, 3)."""
        return torch.einsum("eai,egaj->egij", U[self.elements], self.B)


def internal_energy_sf(U, mesh: HexMesh, material: MaterialModel, rule: QuadratureRule, op: SfOperator = None) -> torch.Tensor:
    op = op or SfOperator(mesh, rule)
    gradu = op.gradients(as_tensor(U))
    return (op.dV * material.density(gradu)).sum()


def nodal_field_and_gradients(net_eval: NetEval, X: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Field and its input gradient at the nodes from three seeded tangent passes."""
    U, dU = net_eval(X, axis_seeds(X.shape[0]))
    return U, torch.stack(dU, dim=-1)


def nodal_gradients_ad(net_eval: NetEval, X) -> torch.Tensor:
    """Per-node 3x3 grad u, column j from the seed e_j."""
    _, gradu = nodal_field_and_gradients(net_eval, as_tensor(X))
    return gradu


def composite_weights(n: int, h: float, scheme: str, axis_name: str = "") -> np.ndarray:
    if scheme not in AD_SCHEMES:
        raise ValueError(f"ad scheme must be one of {AD_SCHEMES}, got {scheme!r}")
    if scheme == "simpson" and n % 2 == 0:
        logger.warning("Simpson needs an odd node count; axis %s has %d, using trapezoid", axis_name, n)
        scheme = "trapezoid"
    w = np.full(n, h)
    if scheme == "trapezoid":
        w[[0, -1]] = 0.5 * h
    else:
        w[1:-1:2] = 4.0 * h / 3.0
        w[2:-1:2] = 2.0 * h / 3.0
        w[[0, -1]] = h / 3.0
    return w


def nodal_quadrature_weights(grid: NodeGrid, scheme: str = "trapezoid") -> np.ndarray:
    """Tensor-product composite weights of the grid nodes (x-fastest)."""
    wx, wy, wz = (
        composite_weights(n, h, scheme, name)
        for n, h, name in zip(grid.dims, grid.spacing, "xyz")
    )
    return np.einsum("k,j,i->kji", wz, wy, wx).ravel()


def internal_energy_ad(gradu_nodes, material: MaterialModel, grid: NodeGrid, scheme: str = "trapezoid", weights: np.ndarray = None) -> torch.Tensor:
    if weights is None:
        weights = nodal_quadrature_weights(grid, scheme)
    return (torch.as_tensor(weights, dtype=DTYPE) * material.density(as_tensor(gradu_nodes))).sum()


def _sf_face_weights(mesh: HexMesh, tag: str) -> Tuple[np.ndarray, np.ndarray]:
    facets = mesh.facets_with_tag(tag)
    if facets.size == 0:
        raise InvalidBoundaryError(f"no facets on surface '{tag}'")
    rule = facet_rule()
    x = mesh.grid.coords[mesh.facet_nodes[facets]]  # (F, 4, 3)
    nodal = np.zeros((facets.size, 4))
    for (xi, eta), w in zip(rule.points, rule.weights):
        s = _QUAD_SIGNS
        N = 0.25 * (1 + s[:, 0] * xi) * (1 + s[:, 1] * eta)
        dN_dxi = 0.25 * s[:, 0] * (1 + s[:, 1] * eta)
        dN_deta = 0.25 * s[:, 1] * (1 + s[:, 0] * xi)
        t1 = np.einsum("q,fqi->fi", dN_dxi, x)
        t2 = np.einsum("q,fqi->fi", dN_deta, x)
        dA = np.linalg.norm(np.cross(t1, t2), axis=1)
        nodal += w * dA[:, None] * N[None, :]
    node_w = np.zeros(mesh.grid.n_nodes)
    np.add.at(node_w, mesh.facet_nodes[facets].ravel(), nodal.ravel())
    ids = np.unique(mesh.facet_nodes[facets])
    return ids, node_w[ids]


def _trapezoid_face_weights(grid: NodeGrid, tag: str) -> Tuple[np.ndarray, np.ndarray]:
    plane = face_nodes(grid, tag)
    axis = "xyz".index(tag[0])
    a, b = IN_PLANE[axis]
    wa = composite_weights(grid.dims[a], grid.spacing[a], "trapezoid")
    wb = composite_weights(grid.dims[b], grid.spacing[b], "trapezoid")
    w = np.outer(wa, wb)
    order = np.argsort(plane.ravel())
    return plane.ravel()[order], w.ravel()[order]


def traction_weights(mesh: HexMesh, tag: str, mode: str) -> Tuple[np.ndarray, np.ndarray]:
    """Node ids and integration weights of a tagged face under 'sf' or 'ad_trapezoid'."""
    if mode == "sf":
        return _sf_face_weights(mesh, tag)
    if mode == "ad_trapezoid":
        if mesh.facets_with_tag(tag).size == 0:
            raise InvalidBoundaryError(f"no facets on surface '{tag}'")
        return _trapezoid_face_weights(mesh.grid, tag)
    raise ValueError(f"work mode must be 'sf' or 'ad_trapezoid', got {mode!r}")


def external_work(U, mesh: HexMesh, traction: TractionSpec, mode: str = "sf") -> torch.Tensor:
    """Integral of t . u over the tagged face of the undeformed configuration."""
    ids, w = traction_weights(mesh, traction.surface, mode)
    U = as_tensor(U)
    t = torch.as_tensor(traction.traction, dtype=DTYPE)
    return (torch.as_tensor(w, dtype=DTYPE) * (U[torch.as_tensor(ids)] @ t)).sum()


class DemProblem:
    """
    One discretized boundary-value problem with every quadrature table precomputed.

    Args:
        mesh: Hex mesh of the domain.
        material: Constitutive model.
        tractions: Constant tractions on tagged faces.
        bc: Clamped plane.
        gradient_mode: "sf" or "ad".
        volume_quadrature: Element rule for SF mode and localization audits.
        ad_scheme: Nodal composite rule for AD mode.
    """

    def __init__(
        self,
        mesh: HexMesh,
        material: MaterialModel,
        tractions: Sequence[TractionSpec],
        bc: DirichletBC,
        gradient_mode: str = "sf",
        volume_quadrature: str = "gauss_2x2x2",
        ad_scheme: str = "trapezoid",
    ):
        if gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient mode must be one of {GRADIENT_MODES}, got {gradient_mode!r}")
        self.mesh = mesh
        self.material = material
        self.tractions = list(tractions)
        self.bc = bc
        self.gradient_mode = gradient_mode
        self.rule = volume_rule(volume_quadrature)
        self.ad_scheme = ad_scheme
        self.X = as_tensor(mesh.grid.coords)
        self.sf = SfOperator(mesh, self.rule)
        self.nodal_weights = nodal_quadrature_weights(mesh.grid, ad_scheme) if gradient_mode == "ad" else None
        self._work_sf = [self._work_table(t, "sf") for t in self.tractions]
        self._work_ad = [self._work_table(t, "ad_trapezoid") for t in self.tractions] if gradient_mode == "ad" else None

    def _work_table(self, traction: TractionSpec, mode: str):
        ids, w = traction_weights(self.mesh, traction.surface, mode)
        return (
            torch.as_tensor(ids, dtype=torch.long),
            torch.as_tensor(w, dtype=DTYPE),
            torch.as_tensor(traction.traction, dtype=DTYPE),
        )

    @staticmethod
    def _work(U: torch.Tensor, tables) -> torch.Tensor:
        total = torch.zeros((), dtype=DTYPE)
        for ids, w, t in tables:
            total = total + (w * (U[ids] @ t)).sum()
        return total

    def internal_energy(self, U: torch.Tensor) -> torch.Tensor:
        return (self.sf.dV * self.material.density(self.sf.gradients(U))).sum()

    def external_work(self, U: torch.Tensor) -> torch.Tensor:
        return self._work(U, self._work_sf)

    def potential_energy(self, U) -> torch.Tensor:
        """SF-mode potential of an arbitrary nodal field (the bypass hook)."""
        U = as_tensor(U)
        return self.internal_energy(U) - self.external_work(U)

    def external_load_vector(self) -> np.ndarray:
        """dW/dU as an (n, 3) array; the work term is linear in U."""
        f = np.zeros((self.mesh.grid.n_nodes, 3))
        for ids, w, t in self._work_sf:
            np.add.at(f, ids.numpy(), w.numpy()[:, None] * t.numpy()[None, :])
        return f

    def ad_potential(self, net_eval: NetEval) -> torch.Tensor:
        U, gradu = nodal_field_and_gradients(net_eval, self.X)
        internal = (torch.as_tensor(self.nodal_weights, dtype=DTYPE) * self.material.density(gradu)).sum()
        return internal - self._work(U, self._work_ad)


def loss(problem: DemProblem, backbone: Backbone) -> DiffProgram:
    """L(theta) = internal energy - external work, with hard Dirichlet enforcement."""
    X = problem.X

    def field(theta: torch.Tensor) -> torch.Tensor:
        U, _ = constrained_eval(backbone.net_eval(theta), problem.bc)(X, [])
        return U

    if problem.gradient_mode == "sf":
        def fn(theta: torch.Tensor) -> torch.Tensor:
            return problem.potential_energy(field(theta))
    else:
        def fn(theta: torch.Tensor) -> torch.Tensor:
            return problem.ad_potential(constrained_eval(backbone.net_eval(theta), problem.bc))

    return DiffProgram(
        fn=fn,
        n_params=param_count(backbone.spec),
        name=f"{backbone.spec.kind}-{problem.gradient_mode}",
        field=field,
    )


def _bar_field(x: float, delta_u: float) -> Tuple[float, float]:
    th = math.tanh(20.0 * (x - 0.5))
    u = x + 0.5 * delta_u * (th + 1.0)
    du = 1.0 + 0.5 * delta_u * 20.0 * (1.0 - th * th)
    return u, du


def demo_1d(delta_u: float, scheme: str = "ad_trapezoid") -> float:
    """
    Potential of the two-node unit bar under a unit end load for a perturbed field.

    ad_trapezoid integrates 1/2 u'^2 with the analytic u' at the two nodes;
    sf_gauss1 uses the one-point rule with the element gradient u(1) - u(0).
    """
    u0, du0 = _bar_field(0.0, delta_u)
    u1, du1 = _bar_field(1.0, delta_u)
    if scheme == "ad_trapezoid":
        internal = 0.5 * (0.5 * du0 * du0 + 0.5 * du1 * du1)
    elif scheme == "sf_gauss1":
        g = u1 - u0
        internal = 0.5 * g * g
    else:
        raise ValueError(f"scheme must be 'ad_trapezoid' or 'sf_gauss1', got {scheme!r}")
    return internal - u1
