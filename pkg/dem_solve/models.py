import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import joblib
import numpy as np
import torch

from .diffengine import DTYPE, NetEval, as_tensor, check_finite, to_torch_sparse
from .errors import ContractError, InvalidBoundaryError
from .graph import Graph, chebyshev_basis
from .grid import NodeGrid, parse_face

logger = logging.getLogger(__name__)

NETWORK_KINDS = ("mlp", "gcn")
DEFAULT_WIDTHS = (3, 16, 32, 64, 32, 16, 3)


@dataclass(frozen=True)
class NetworkSpec:
    """Backbone description: tanh on hidden layers, linear output."""

    kind: str = "gcn"
    layer_widths: Tuple[int, ...] = DEFAULT_WIDTHS
    cheb_order: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NETWORK_KINDS:
            raise ValueError(f"network kind must be one of {NETWORK_KINDS}, got {self.kind!r}")
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2 or widths[0] != 3 or widths[-1] != 3:
            raise ValueError(f"layer widths must start and end with 3, got {widths}")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be >= 1, got {widths}")
        if self.cheb_order < 1:
            raise ValueError(f"cheb_order must be >= 1, got {self.cheb_order}")

    @property
    def blocks_per_layer(self) -> int:
        return self.cheb_order if self.kind == "gcn" else 1


@dataclass(frozen=True)
class ParamBlock:
    name: str
    shape: Tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def param_layout(spec: NetworkSpec) -> List[ParamBlock]:
    """Partition of the flat parameter vector: per layer K weight blocks then a bias."""
    blocks, offset = [], 0
    widths = spec.layer_widths
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        for k in range(spec.blocks_per_layer):
            blocks.append(ParamBlock(f"layer{layer}.W{k + 1}", (fan_in, fan_out), offset))
            offset += fan_in * fan_out
        blocks.append(ParamBlock(f"layer{layer}.b", (fan_out,), offset))
        offset += fan_out
    return blocks


def param_count(spec: NetworkSpec) -> int:
    last = param_layout(spec)[-1]
    return last.offset + last.size


@dataclass(frozen=True)
class NetworkParams:
    spec: NetworkSpec
    theta: Union[np.ndarray, torch.Tensor]

    @property
    def n_params(self) -> int:
        return param_count(self.spec)


def init_params(spec: NetworkSpec) -> NetworkParams:
    """Glorot-uniform weights and zero biases from a seeded generator."""
    rng = np.random.default_rng(spec.seed)
    theta = np.zeros(param_count(spec), dtype=np.float64)
    for block in param_layout(spec):
        if block.name.endswith(".b"):
            continue
        fan_in, fan_out = block.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        theta[block.offset:block.offset + block.size] = rng.uniform(-bound, bound, size=block.size)
    return NetworkParams(spec=spec, theta=theta)


def _unpack(spec: NetworkSpec, theta: torch.Tensor) -> List[Tuple[List[torch.Tensor], torch.Tensor]]:
    if theta.ndim != 1 or theta.shape[0] != param_count(spec):
        raise ContractError(f"expected {param_count(spec)} parameters, got {tuple(theta.shape)}")
    layers, current = [], []
    for block in param_layout(spec):
        view = theta[block.offset:block.offset + block.size].view(*block.shape)
        if block.name.endswith(".b"):
            layers.append((current, view))
            current = []
        else:
            current.append(view)
    return layers


class Backbone:
    """
    Network forward map with forward-propagated input tangents.

    An MLP is the K = 1 case without a graph; a GCN layer sums Chebyshev terms
    Z^k Theta^k over the scaled Laplacian of the node graph.
    """

    def __init__(self, spec: NetworkSpec, graph: Optional[Graph] = None):
        self.spec = spec
        self.L_hat = None
        if spec.kind == "gcn" and spec.cheb_order > 1:
            if graph is None:
                raise ContractError("gcn backbone with cheb_order > 1 needs a graph")
            self.L_hat = to_torch_sparse(graph.scaled_laplacian)
        self.n_nodes = graph.n_nodes if graph is not None else None

    def forward(
        self, theta: torch.Tensor, X: torch.Tensor, tangents: Sequence[torch.Tensor] = ()
    ) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        if X.ndim != 2 or X.shape[1] != 3:
            raise ContractError(f"inputs must be n x 3, got {tuple(X.shape)}")
        if self.n_nodes is not None and self.spec.kind == "gcn" and X.shape[0] != self.n_nodes:
            raise ContractError(f"graph has {self.n_nodes} nodes, inputs have {X.shape[0]}")
        layers = _unpack(self.spec, theta)
        H, dH = X, list(tangents)
        last = len(layers) - 1
        for i, (weights, bias) in enumerate(layers):
            Z = self._basis(H, len(weights))
            out = sum(z @ w for z, w in zip(Z, weights)) + bias
            d_out = [sum(z @ w for z, w in zip(self._basis(t, len(weights)), weights)) for t in dH]
            if i == last:
                H, dH = out, d_out
            else:
                H = torch.tanh(out)
                slope = 1.0 - H * H
                dH = [slope * d for d in d_out]
        check_finite(H.detach(), f"{self.spec.kind}_forward")
        return H, dH

    def _basis(self, H: torch.Tensor, K: int) -> List[torch.Tensor]:
        if K == 1:
            return [H]
        return chebyshev_basis(self.L_hat, H, K)

    def net_eval(self, theta: torch.Tensor) -> NetEval:
        return lambda X, tangents: self.forward(theta, X, tangents)


def mlp_forward(params: NetworkParams, X) -> torch.Tensor:
    if params.spec.kind != "mlp":
        raise ContractError("mlp_forward needs an mlp spec")
    U, _ = Backbone(params.spec).forward(as_tensor(params.theta), as_tensor(X))
    return U


def gcn_forward(params: NetworkParams, graph: Graph, X) -> torch.Tensor:
    if params.spec.kind != "gcn":
        raise ContractError("gcn_forward needs a gcn spec")
    U, _ = Backbone(params.spec, graph).forward(as_tensor(params.theta), as_tensor(X))
    return U


@dataclass(frozen=True)
class DirichletBC:
    """Clamped plane X[axis] = value, enforced by a linear distance multiplier."""

    axis: int
    value: float
    length: float

    @property
    def slope(self) -> float:
        # g grows into the domain from the clamped plane
        sign = 1.0 if self.value <= 0.5 * self.length else -1.0
        return sign / self.length


def dirichlet_for_face(grid: NodeGrid, face: str = "x0") -> DirichletBC:
    axis, side = parse_face(face)
    value = grid.lengths[axis] if side else 0.0
    return DirichletBC(axis=axis, value=value, length=grid.lengths[axis])


def dirichlet_multiplier(X: torch.Tensor, bc: DirichletBC) -> Tuple[torch.Tensor, torch.Tensor]:
    """g(X) as an n x 1 column and its constant gradient (3,)."""
    on_plane = torch.isclose(X[:, bc.axis], torch.tensor(bc.value, dtype=DTYPE), rtol=0.0, atol=1e-12)
    if not bool(on_plane.any()):
        raise InvalidBoundaryError(f"no grid nodes on the clamped plane X[{bc.axis}] = {bc.value}")
    g = ((X[:, bc.axis] - bc.value) * bc.slope).unsqueeze(1)
    grad_g = torch.zeros(3, dtype=DTYPE)
    grad_g[bc.axis] = bc.slope
    return g, grad_g


def apply_dirichlet(U_raw, X, bc: DirichletBC) -> torch.Tensor:
    """U = g(X) * U_raw, exactly zero on the clamped plane."""
    X = as_tensor(X)
    g, _ = dirichlet_multiplier(X, bc)
    return g * as_tensor(U_raw)


def constrained_eval(net_eval: NetEval, bc: DirichletBC) -> NetEval:
    """Compose a forward map with the Dirichlet multiplier, tangents included."""

    def _eval(X, tangents):
        U_raw, dU_raw = net_eval(X, tangents)
        g, grad_g = dirichlet_multiplier(X, bc)
        U = g * U_raw
        dU = [(t @ grad_g).unsqueeze(1) * U_raw + g * d for t, d in zip(tangents, dU_raw)]
        return U, dU

    return _eval


def save_params(params: NetworkParams, path: Union[str, Path]) -> None:
    theta = params.theta.detach().numpy() if torch.is_tensor(params.theta) else np.asarray(params.theta)
    joblib.dump({"spec": asdict(params.spec), "theta": theta}, path)


def load_params(path: Union[str, Path]) -> NetworkParams:
    payload = joblib.load(path)
    spec = NetworkSpec(**payload["spec"])
    return NetworkParams(spec=spec, theta=np.asarray(payload["theta"], dtype=np.float64))
