"""
Constitutive models and strain-energy densities.

All functions act on batches of 3x3 tensors (shape (..., 3, 3)) and accept
anything torch.as_tensor understands.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Union

import torch

from .diffengine import as_tensor, check_finite, det3, frac_pow, trace3
from .errors import IncompressibleLimitError, InvalidMaterialError, InvertedElementError

logger = logging.getLogger(__name__)

# per-point displacement gradient, shape (..., 3, 3), entry [i, j] = du_i / dX_j
GradU = torch.Tensor


def _eye_like(A: torch.Tensor) -> torch.Tensor:
    return torch.eye(3, dtype=A.dtype).expand(A.shape)


def strain(gradu) -> torch.Tensor:
    gradu = as_tensor(gradu)
    return 0.5 * (gradu + gradu.transpose(-1, -2))


def stress_linear(eps, E: float, nu: float) -> torch.Tensor:
    if nu == 0.5:
        raise IncompressibleLimitError("nu = 0.5 is the incompressible limit of the linear law")
    eps = as_tensor(eps)
    two_mu = E / (1.0 + nu)
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return two_mu * eps + lam * trace3(eps)[..., None, None] * _eye_like(eps)


def energy_linear(eps, sigma) -> torch.Tensor:
    return check_finite(0.5 * (as_tensor(sigma) * as_tensor(eps)).sum(dim=(-2, -1)), "energy_linear")


def deformation_gradient(gradu) -> torch.Tensor:
    gradu = as_tensor(gradu)
    return gradu + _eye_like(gradu)


def _jacobian(F: torch.Tensor, op: str) -> torch.Tensor:
    J = det3(F)
    if not bool((J > 0).all()):
        raise InvertedElementError(op)
    return J


def energy_neohookean(F, C10: float, D1: float) -> torch.Tensor:
    """Psi = C10 (tr(Fbar Fbar^T) - 3) + (J - 1)^2 / D1 with Fbar = J^(-1/3) F."""
    F = as_tensor(F)
    J = check_finite(_jacobian(F, "energy_neohookean"), "energy_neohookean:J")
    I1 = check_finite((F * F).sum(dim=(-2, -1)), "energy_neohookean:I1")
    psi = C10 * (frac_pow(J, -2.0 / 3.0, "energy_neohookean:J^-2/3") * I1 - 3.0) + (J - 1.0) ** 2 / D1
    return check_finite(psi, "energy_neohookean")


def pk1_stress(F, C10: float, D1: float) -> torch.Tensor:
    """Analytic first Piola-Kirchhoff stress dPsi_NH / dF."""
    F = as_tensor(F)
    J = check_finite(_jacobian(F, "pk1_stress"), "pk1_stress:J")
    I1 = check_finite((F * F).sum(dim=(-2, -1)), "pk1_stress:I1")
    F_inv_T = torch.linalg.inv(F).transpose(-1, -2)
    J23 = frac_pow(J, -2.0 / 3.0, "pk1_stress")[..., None, None]
    return (
        2.0 * C10 * J23 * (F - (I1 / 3.0)[..., None, None] * F_inv_T)
        + (2.0 / D1) * ((J - 1.0) * J)[..., None, None] * F_inv_T
    )


@dataclass(frozen=True)
class LinearElastic:
    E: float
    nu: float
    regime = "linear_elastic"

    def __post_init__(self):
        if not self.E > 0:
            raise InvalidMaterialError(f"E must be > 0, got {self.E}")
        if self.nu == 0.5:
            raise IncompressibleLimitError("nu = 0.5 is the incompressible limit of the linear law")
        if not -1.0 < self.nu < 0.5:
            raise InvalidMaterialError(f"nu must lie in (-1, 0.5), got {self.nu}")

    def density(self, gradu: GradU) -> torch.Tensor:
        eps = strain(gradu)
        return energy_linear(eps, stress_linear(eps, self.E, self.nu))

    def stress(self, gradu: GradU) -> torch.Tensor:
        """dPsi / d(grad u); the Cauchy stress of the small-strain law."""
        return stress_linear(strain(gradu), self.E, self.nu)

    @property
    def lame(self):
        mu = self.E / (2.0 * (1.0 + self.nu))
        lam = self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))
        return lam, mu


@dataclass(frozen=True)
class NeoHookean:
    C10: float
    D1: float
    regime = "neo_hookean"

    def __post_init__(self):
        if not self.C10 > 0:
            raise InvalidMaterialError(f"C10 must be > 0, got {self.C10}")
        if not self.D1 > 0:
            raise InvalidMaterialError(f"D1 must be > 0, got {self.D1}")

    def density(self, gradu: GradU) -> torch.Tensor:
        return energy_neohookean(deformation_gradient(gradu), self.C10, self.D1)

    def stress(self, gradu: GradU) -> torch.Tensor:
        """dPsi / d(grad u) = P."""
        return pk1_stress(deformation_gradient(gradu), self.C10, self.D1)


MaterialModel = Union[LinearElastic, NeoHookean]


def material_from_dict(d: Dict[str, Any]) -> MaterialModel:
    kind = d.get("kind")
    if kind == "linear_elastic":
        return LinearElastic(E=float(d["E"]), nu=float(d["nu"]))
    if kind == "neo_hookean":
        return NeoHookean(C10=float(d["C10"]), D1=float(d["D1"]))
    raise InvalidMaterialError(f"unknown material kind {kind!r}")


def material_to_dict(m: MaterialModel) -> Dict[str, Any]:
    if isinstance(m, LinearElastic):
        return {"kind": "linear_elastic", "E": m.E, "nu": m.nu}
    return {"kind": "neo_hookean", "C10": m.C10, "D1": m.D1}
