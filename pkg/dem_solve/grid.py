"""
Structured node grids and trilinear hexahedral meshes for box domains.

Node ordering is x-fastest, then y, then z; the domain corner sits at the origin.
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .errors import FacetLookupError, InvalidBoundaryError, InvalidDiscretizationError

logger = logging.getLogger(__name__)

FACE_TAGS = ("x0", "x1", "y0", "y1", "z0", "z1")

# in-plane axes of a face, cyclic so that e_a x e_b = +e_axis
IN_PLANE = {0: (1, 2), 1: (2, 0), 2: (0, 1)}

# trilinear hex corner ordering (VTK_HEXAHEDRON), offsets in (i, j, k)
HEX_CORNERS = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [1, 1, 1],
        [0, 1, 1],
    ],
    dtype=np.int64,
)


@dataclass(frozen=True)
class NodeGrid:
    dims: Tuple[int, int, int]
    lengths: Tuple[float, float, float]
    coords: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.coords.shape[0])

    @property
    def spacing(self) -> Tuple[float, float, float]:
        return tuple(L / (n - 1) for L, n in zip(self.lengths, self.dims))

    def node_index(self, i: int, j: int, k: int) -> int:
        nx, ny, _ = self.dims
        return i + nx * (j + ny * k)

    def axis_values(self, axis: int) -> np.ndarray:
        return np.linspace(0.0, self.lengths[axis], self.dims[axis])


@dataclass(frozen=True)
class Facet:
    nodes: Tuple[int, int, int, int]
    normal: Tuple[float, float, float]
    tag: str


@dataclass(frozen=True)
class HexMesh:
    grid: NodeGrid
    elements: np.ndarray
    facet_nodes: np.ndarray
    facet_normals: np.ndarray
    facet_tags: np.ndarray

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @property
    def n_facets(self) -> int:
        return int(self.facet_nodes.shape[0])

    def facet(self, facet_id: int) -> Facet:
        if not 0 <= facet_id < self.n_facets:
            raise FacetLookupError(f"facet id {facet_id} out of range [0, {self.n_facets})")
        return Facet(
            nodes=tuple(int(n) for n in self.facet_nodes[facet_id]),
            normal=tuple(float(c) for c in self.facet_normals[facet_id]),
            tag=str(self.facet_tags[facet_id]),
        )

    def facets_with_tag(self, tag: str) -> np.ndarray:
        """Indices of the boundary facets carrying a surface tag."""
        if tag not in FACE_TAGS:
            raise InvalidBoundaryError(f"unknown surface tag '{tag}', expected one of {FACE_TAGS}")
        return np.flatnonzero(self.facet_tags == tag)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def parse_face(tag: str) -> Tuple[int, int]:
    """Split a face tag like 'x1' into (axis, side)."""
    if tag not in FACE_TAGS:
        raise InvalidBoundaryError(f"unknown surface tag '{tag}', expected one of {FACE_TAGS}")
    return "xyz".index(tag[0]), int(tag[1])


def build_grid(dims: Sequence[int], lengths: Sequence[float]) -> NodeGrid:
    """
    Build a tensor-product node grid on [0, Lx] x [0, Ly] x [0, Lz].

    Args:
        dims: Node counts (Nx, Ny, Nz), each at least 2.
        lengths: Domain extents (Lx, Ly, Lz), each positive.

    Returns:
        NodeGrid with Nx*Ny*Nz nodes ordered x-fastest.

    Raises:
        InvalidDiscretizationError: If a dimension is below 2 or a length is not positive.
    """
    if len(dims) != 3 or len(lengths) != 3:
        raise InvalidDiscretizationError("dims and lengths must be triples")
    dims = tuple(int(d) for d in dims)
    lengths = tuple(float(L) for L in lengths)
    if any(d < 2 for d in dims):
        raise InvalidDiscretizationError(f"every grid dimension must be >= 2, got {dims}")
    if any(not np.isfinite(L) or L <= 0 for L in lengths):
        raise InvalidDiscretizationError(f"every domain length must be > 0, got {lengths}")

    axes = [np.linspace(0.0, L, n) for L, n in zip(lengths, dims)]
    zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    coords = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    return NodeGrid(dims=dims, lengths=lengths, coords=_readonly(coords))


def _index_block(dims: Tuple[int, int, int]) -> np.ndarray:
    nx, ny, nz = dims
    return np.arange(nx * ny * nz, dtype=np.int64).reshape(nz, ny, nx)


def face_nodes(grid: NodeGrid, tag: str) -> np.ndarray:
    """
    Node indices of a domain face as a 2D array over its in-plane axes.

    Rows run along the first in-plane axis and columns along the second
    (for 'x0'/'x1' these are y and z).
    """
    axis, side = parse_face(tag)
    a, b = IN_PLANE[axis]
    idx = _index_block(grid.dims).transpose(2, 1, 0)  # idx[i, j, k]
    sel = [slice(None)] * 3
    sel[axis] = grid.dims[axis] - 1 if side else 0
    plane = idx[tuple(sel)]
    remaining = [ax for ax in range(3) if ax != axis]
    if remaining != [a, b]:
        plane = plane.T
    return plane


def build_hex_mesh(grid: NodeGrid) -> HexMesh:
    """
    Build the trilinear hexahedral discretization of a grid with tagged boundary facets.

    Elements are ordered x-fastest like the nodes; facets are grouped by face in
    FACE_TAGS order and oriented so that their node loop is counter-clockwise
    seen from outside the domain.
    """
    nx, ny, nz = grid.dims
    idx = _index_block(grid.dims).transpose(2, 1, 0)  # idx[i, j, k]

    ii, jj, kk = np.meshgrid(
        np.arange(nx - 1), np.arange(ny - 1), np.arange(nz - 1), indexing="ij"
    )
    # x-fastest element order
    ii, jj, kk = (a.transpose(2, 1, 0).ravel() for a in (ii, jj, kk))
    elements = np.stack(
        [idx[ii + di, jj + dj, kk + dk] for di, dj, dk in HEX_CORNERS], axis=1
    )

    nodes_list, normals_list, tags_list = [], [], []
    for tag in FACE_TAGS:
        axis, side = parse_face(tag)
        plane = face_nodes(grid, tag)
        q = np.stack(
            [plane[:-1, :-1], plane[1:, :-1], plane[1:, 1:], plane[:-1, 1:]], axis=-1
        )
        q = q.transpose(1, 0, 2).reshape(-1, 4)
        if not side:
            q = q[:, [0, 3, 2, 1]]
        normal = np.zeros(3)
        normal[axis] = 1.0 if side else -1.0
        nodes_list.append(q)
        normals_list.append(np.tile(normal, (q.shape[0], 1)))
        tags_list.extend([tag] * q.shape[0])

    mesh = HexMesh(
        grid=grid,
        elements=_readonly(elements.astype(np.int64)),
        facet_nodes=_readonly(np.concatenate(nodes_list).astype(np.int64)),
        facet_normals=_readonly(np.concatenate(normals_list)),
        facet_tags=_readonly(np.array(tags_list)),
    )
    logger.debug("Built hex mesh: %d elements, %d facets", mesh.n_elements, mesh.n_facets)
    return mesh


def _resolve_facet(mesh: HexMesh, facet_id: Union[int, Sequence[int]]) -> int:
    if isinstance(facet_id, (int, np.integer)):
        if not 0 <= int(facet_id) < mesh.n_facets:
            raise FacetLookupError(f"facet id {facet_id} out of range [0, {mesh.n_facets})")
        return int(facet_id)
    wanted = sorted(int(n) for n in facet_id)
    if len(wanted) != 4:
        raise FacetLookupError(f"a boundary quad has 4 nodes, got {len(wanted)}")
    matches = np.flatnonzero((np.sort(mesh.facet_nodes, axis=1) == wanted).all(axis=1))
    if matches.size == 0:
        raise FacetLookupError(f"no boundary facet with nodes {tuple(facet_id)}")
    return int(matches[0])


def facet_area_and_normal(
    mesh: HexMesh, facet_id: Union[int, Sequence[int]]
) -> Tuple[float, np.ndarray]:
    """
    Area and outward unit normal of a boundary facet.

    Args:
        mesh: Hex mesh.
        facet_id: Facet index, or the four node indices of a boundary quad.

    Raises:
        FacetLookupError: If the facet does not exist (including interior quads).
    """
    fid = _resolve_facet(mesh, facet_id)
    x = mesh.grid.coords[mesh.facet_nodes[fid]]
    # 2x2 Gauss over the bilinear map of the quad
    g = 1.0 / np.sqrt(3.0)
    area = 0.0
    for xi in (-g, g):
        for eta in (-g, g):
            dx_dxi = 0.25 * ((1 - eta) * (x[1] - x[0]) + (1 + eta) * (x[2] - x[3]))
            dx_deta = 0.25 * ((1 - xi) * (x[3] - x[0]) + (1 + xi) * (x[2] - x[1]))
            area += float(np.linalg.norm(np.cross(dx_dxi, dx_deta)))
    n = np.cross(x[1] - x[0], x[3] - x[0]) + np.cross(x[3] - x[2], x[1] - x[2])
    normal = n / np.linalg.norm(n)
    return area, normal
