import logging
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .diffengine import DiffProgram, evaluate, value_and_parameter_gradient
from .errors import ContractError

logger = logging.getLogger(__name__)

COMPONENTS = ("x", "y", "z")


@dataclass
class RelativeDifference:
    """
    Per-node percent difference of each displacement component.

    Attributes:
        per_node: (n, 3) array; column i is |u_nn,i - u_ref,i| / max |u_ref,i| * 100.
        component_means: Mean of each column.
        mean: Grand mean over all nodes and components.
        absolute: Components whose reference is identically zero; their column
            holds the absolute difference instead.
    """

    per_node: np.ndarray
    component_means: np.ndarray
    mean: float
    absolute: List[str]

    def summary(self) -> Dict[str, object]:
        out = {f"mean_RD_{c}": float(m) for c, m in zip(COMPONENTS, self.component_means)}
        out["mean_RD"] = self.mean
        out["absolute_components"] = list(self.absolute)
        return out


def relative_difference(U_nn, U_ref) -> RelativeDifference:
    U_nn = np.asarray(U_nn, dtype=np.float64)
    U_ref = np.asarray(U_ref, dtype=np.float64)
    if U_nn.shape != U_ref.shape or U_nn.ndim != 2 or U_nn.shape[1] != 3:
        raise ContractError(f"fields must share an (n, 3) shape, got {U_nn.shape} and {U_ref.shape}")
    diff = np.abs(U_nn - U_ref)
    scale = np.abs(U_ref).max(axis=0)
    absolute = [c for c, s in zip(COMPONENTS, scale) if s == 0.0]
    if absolute:
        logger.warning("Reference is zero in %s; reporting absolute difference there", ",".join(absolute))
    per_node = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0) * 100.0, diff)
    means = per_node.mean(axis=0)
    return RelativeDifference(per_node, means, float(per_node.mean()), absolute)


def fd_gradient_audit(prog: DiffProgram, theta, n_probes: int = 10, step: float = 1e-5, seed: int = 0) -> float:
    """
    Worst disagreement between the reverse-mode gradient and central differences.

    Each probe compares g . d with (L(theta + h d) - L(theta - h d)) / 2h along a
    random unit direction d; the error is scaled by max(|g|, 1e-12).
    """
    theta = np.asarray(theta, dtype=np.float64)
    _, g = value_and_parameter_gradient(prog, theta)
    scale = max(float(np.linalg.norm(g)), 1e-12)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        d = rng.standard_normal(theta.shape)
        d /= np.linalg.norm(d)
        fd = (evaluate(prog, theta + step * d) - evaluate(prog, theta - step * d)) / (2.0 * step)
        worst = max(worst, abs(float(g @ d) - fd) / scale)
    logger.debug("%s: fd gradient audit worst error %.3e over %d probes", prog.name, worst, n_probes)
    return worst
