"""Legacy ASCII VTK unstructured-grid output for hex meshes."""
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import torch

from .assembly import SfOperator, volume_rule
from .errors import NonFiniteLossError
from .grid import HexMesh
from .materials import MaterialModel, strain

logger = logging.getLogger(__name__)

VTK_HEXAHEDRON = 12


def cell_tensors(U, mesh: HexMesh, material: Optional[MaterialModel] = None, op: Optional[SfOperator] = None) -> Dict[str, np.ndarray]:
    """Quadrature-point averages of grad u, strain and (with a material) stress per cell."""
    op = op or SfOperator(mesh, volume_rule("gauss_2x2x2"))
    with torch.no_grad():
        gradu = op.gradients(torch.as_tensor(np.asarray(U, dtype=np.float64)))
        out = {"grad_u": gradu, "strain": strain(gradu)}
        if material is not None:
            try:
                out["stress"] = material.stress(gradu)
            except NonFiniteLossError:
                logger.warning("Stress is not finite on this field; not written")
    return {name: t.mean(dim=1).numpy() for name, t in out.items()}


def _fmt(row) -> str:
    return " ".join(f"{v:.10g}" for v in row)


def write_vtk(
    path: Union[str, Path],
    mesh: HexMesh,
    U,
    material: Optional[MaterialModel] = None,
    title: str = "dem_solve displacement field",
    op: Optional[SfOperator] = None,
) -> Path:
    """
    Write the mesh, point vectors "u" and cell tensors as a legacy ASCII file.

    Args:
        path: Output file.
        mesh: Hex mesh (VTK_HEXAHEDRON corner order).
        U: Nodal displacements (n x 3).
        material: When given, a "stress" cell tensor is written too.
        title: Header line.
        op: Precomputed element operators.

    Returns:
        The written path.
    """
    path = Path(path)
    U = np.asarray(U, dtype=np.float64)
    coords = mesh.grid.coords
    elements = mesh.elements
    tensors = cell_tensors(U, mesh, material, op)

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(coords)} double",
    ]
    lines.extend(_fmt(p) for p in coords)
    lines.append(f"CELLS {len(elements)} {len(elements) * 9}")
    lines.extend("8 " + " ".join(str(int(i)) for i in cell) for cell in elements)
    lines.append(f"CELL_TYPES {len(elements)}")
    lines.extend([str(VTK_HEXAHEDRON)] * len(elements))
    lines.append(f"POINT_DATA {len(coords)}")
    lines.append("VECTORS u double")
    lines.extend(_fmt(u) for u in U)
    lines.append(f"CELL_DATA {len(elements)}")
    for name, values in tensors.items():
        lines.append(f"TENSORS {name} double")
        for T in values:
            lines.extend(_fmt(r) for r in T)
    path.write_text("\n".join(lines) + "\n")
    logger.info("Wrote %s (%d points, %d cells)", path, len(coords), len(elements))
    return path
