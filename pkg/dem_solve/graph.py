import logging
import operator
from dataclasses import dataclass, field
from typing import List, Union

import networkx as nx
import numpy as np
import scipy.sparse as sp
import torch
from scipy.spatial import cKDTree

from .errors import InvalidOrderError, InvalidThresholdError
from .grid import NodeGrid

logger = logging.getLogger(__name__)

# relative slack on r so that auto-r neighbors survive rounding
RADIUS_RTOL = 1e-9

ADJACENCY_MODES = ("binary", "distance")


@dataclass(frozen=True)
class Graph:
    n_nodes: int
    edges: np.ndarray
    weights: np.ndarray
    radius: float
    adjacency: sp.csr_matrix
    degree: sp.csr_matrix
    scaled_laplacian: sp.csr_matrix
    isolated: np.ndarray
    warnings: List[str] = field(default_factory=list)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])


def resolve_radius(grid: NodeGrid, r: Union[float, str]) -> float:
    if isinstance(r, str):
        if r != "auto":
            raise InvalidThresholdError(f"radius must be a positive number or 'auto', got {r!r}")
        return grid.lengths[0] / (grid.dims[0] - 1)
    r = float(r)
    if not np.isfinite(r) or r <= 0:
        raise InvalidThresholdError(f"radius must be > 0, got {r}")
    return r


def build_graph(grid: NodeGrid, r: Union[float, str] = "auto", adjacency: str = "binary") -> Graph:
    """
    Build the radius-thresholded graph over the grid nodes.

    Args:
        grid: Node grid.
        r: Threshold radius, or "auto" for Lx / (Nx - 1).
        adjacency: "binary" for unit edge entries, "distance" for Euclidean
            distance entries.

    Returns:
        Graph with edges, weights, adjacency, degree and scaled Laplacian.
    """
    if adjacency not in ADJACENCY_MODES:
        raise ValueError(f"adjacency must be one of {ADJACENCY_MODES}, got {adjacency!r}")
    radius = resolve_radius(grid, r)

    tree = cKDTree(grid.coords)
    pairs = tree.query_pairs(radius * (1.0 + RADIUS_RTOL), output_type="ndarray")
    if pairs.size:
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    else:
        pairs = np.zeros((0, 2), dtype=np.int64)
    weights = np.linalg.norm(grid.coords[pairs[:, 0]] - grid.coords[pairs[:, 1]], axis=1)

    G = nx.Graph()
    G.add_nodes_from(range(grid.n_nodes))
    G.add_weighted_edges_from(
        (int(a), int(b), float(w)) for (a, b), w in zip(pairs, weights)
    )

    A = nx.to_scipy_sparse_array(
        G,
        nodelist=list(range(grid.n_nodes)),
        weight="weight" if adjacency == "distance" else None,
        format="csr",
        dtype=np.float64,
    )
    A = sp.csr_matrix(A)
    D = sp.diags(np.asarray(A.sum(axis=1)).ravel(), format="csr")

    isolated = np.array(sorted(nx.isolates(G)), dtype=np.int64)
    warnings = []
    if isolated.size:
        msg = f"{isolated.size} isolated node(s) with radius {radius:.6g}"
        logger.warning(msg)
        warnings.append(msg)

    L_hat = scaled_laplacian_from(A)
    logger.debug("Graph: %d nodes, %d edges, r=%.6g", grid.n_nodes, pairs.shape[0], radius)
    return Graph(
        n_nodes=grid.n_nodes,
        edges=pairs,
        weights=weights,
        radius=radius,
        adjacency=A,
        degree=D,
        scaled_laplacian=L_hat,
        isolated=isolated,
        warnings=warnings,
    )


def scaled_laplacian_from(A: sp.spmatrix) -> sp.csr_matrix:
    """L_hat = L - I with L = I - D^(-1/2) A D^(-1/2); zero-degree rows give D^(-1/2) = 0."""
    A = sp.csr_matrix(A)
    degrees = np.asarray(A.sum(axis=1)).ravel()
    with np.errstate(divide="ignore"):
        d_inv_sqrt = 1.0 / np.sqrt(degrees)
    d_inv_sqrt[~np.isfinite(d_inv_sqrt)] = 0.0
    D_inv_sqrt = sp.diags(d_inv_sqrt, format="csr")
    # L - I = -D^(-1/2) A D^(-1/2)
    return sp.csr_matrix(-(D_inv_sqrt @ A @ D_inv_sqrt))


def scaled_laplacian(graph: Graph) -> sp.csr_matrix:
    return scaled_laplacian_from(graph.adjacency)


def chebyshev_basis(L_hat, X, K: int) -> list:
    """
    Chebyshev basis Z^1..Z^K of a node feature matrix.

    Works with scipy sparse / numpy inputs and with torch sparse / dense tensors.

    Args:
        L_hat: Scaled Laplacian (n x n).
        X: Node features (n x f).
        K: Number of Chebyshev terms.

    Returns:
        List [Z^1, ..., Z^K] with Z^1 = X, Z^2 = L_hat X, Z^k = 2 L_hat Z^(k-1) - Z^(k-2).
    """
    if K < 1:
        raise InvalidOrderError(f"Chebyshev order must be >= 1, got {K}")
    matmul = _matmul_for(L_hat)
    Z = [X]
    if K >= 2:
        Z.append(matmul(L_hat, X))
    for _ in range(2, K):
        Z.append(2.0 * matmul(L_hat, Z[-1]) - Z[-2])
    return Z


def _matmul_for(L_hat):
    if isinstance(L_hat, torch.Tensor) and L_hat.is_sparse:
        return torch.sparse.mm
    return operator.matmul
