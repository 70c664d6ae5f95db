from typing import Optional, Tuple

import numpy as np

from .assembly import SfOperator, volume_rule
from .grid import HexMesh

DEFAULT_THRESHOLDS = {"linear_elastic": 5.0, "neo_hookean": 5.0}


def localization_metric(U, mesh: HexMesh, op: Optional[SfOperator] = None) -> float:
    """Largest Frobenius norm of the element grad u over all quadrature points."""
    op = op or SfOperator(mesh, volume_rule("gauss_2x2x2"))
    U = np.asarray(U, dtype=np.float64)
    if not np.all(np.isfinite(U)):
        return float("inf")
    gradu = np.einsum("eai,egaj->egij", U[mesh.elements], op.B_np)
    return float(np.sqrt((gradu * gradu).sum(axis=(-2, -1))).max())


def detect_localization(
    U,
    mesh: HexMesh,
    regime: str = "linear_elastic",
    threshold: Optional[float] = None,
    op: Optional[SfOperator] = None,
) -> Tuple[bool, float]:
    """
    Shape-function audit of a nodal field for strain localization.

    Args:
        U: Nodal displacements (n x 3).
        mesh: Hex mesh the field lives on.
        regime: Material regime, selects the default threshold.
        threshold: Overrides the regime default.
        op: Precomputed element operators of the mesh.

    Returns:
        (flag, metric) with flag = metric > threshold.
    """
    if threshold is None:
        threshold = DEFAULT_THRESHOLDS.get(regime, 5.0)
    metric = localization_metric(U, mesh, op)
    return bool(metric > threshold), metric
