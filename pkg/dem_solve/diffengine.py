"""
Differentiation contract used by the rest of the package.

Losses are torch programs over a flat float64 parameter vector; parameter
gradients come from reverse mode. Input directional derivatives are propagated
forward alongside the network evaluation (a tangent per seed direction), so the
result is an ordinary tensor in the autograd graph and can sit inside a loss.

Supported vocabulary: dense matmul, sparse-dense matmul, elementwise
add/mul/tanh, reductions, 3x3 determinant, 3x3 trace, fractional power of a
positive scalar, squared Frobenius norm.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import torch

from .errors import ContractError, InvertedElementError, NonFiniteLossError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

# net_eval(X, tangents) -> (U, [dU for each tangent])
NetEval = Callable[[torch.Tensor, Sequence[torch.Tensor]], Tuple[torch.Tensor, List[torch.Tensor]]]


@dataclass(frozen=True)
class DiffProgram:
    """
    A scalar loss over a flat parameter vector.

    Attributes:
        fn: Maps theta (float64 tensor of length n_params) to a scalar tensor.
        n_params: Declared parameter count.
        name: Label used in logs.
        field: Optional map from theta to the nodal displacement field.
    """

    fn: Callable[[torch.Tensor], torch.Tensor]
    n_params: int
    name: str = "program"
    field: Optional[Callable[[torch.Tensor], torch.Tensor]] = None

    def __call__(self, theta: torch.Tensor) -> torch.Tensor:
        return self.fn(theta)


def configure_determinism() -> None:
    """Pin intra-op threads so reductions run in one fixed order."""
    torch.set_num_threads(1)


def as_tensor(x, requires_grad: bool = False) -> torch.Tensor:
    if torch.is_tensor(x):
        t = x.to(DTYPE)
    else:
        t = torch.as_tensor(np.array(x, dtype=np.float64))
    if requires_grad:
        t = t.detach().clone().requires_grad_(True)
    return t


def to_torch_sparse(mat: sp.spmatrix) -> torch.Tensor:
    coo = sp.coo_matrix(mat)
    indices = torch.as_tensor(np.vstack([coo.row, coo.col]).astype(np.int64))
    values = torch.as_tensor(coo.data, dtype=DTYPE)
    return torch.sparse_coo_tensor(indices, values, coo.shape).coalesce()


def check_finite(t: torch.Tensor, op: str) -> torch.Tensor:
    if not bool(torch.isfinite(t).all()):
        raise NonFiniteLossError(op)
    return t


def sparse_matmul(L: torch.Tensor, X: torch.Tensor) -> torch.Tensor:
    return torch.sparse.mm(L, X)


def det3(F: torch.Tensor) -> torch.Tensor:
    """Determinant of a batch of 3x3 matrices (cofactor expansion)."""
    return (
        F[..., 0, 0] * (F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1])
        - F[..., 0, 1] * (F[..., 1, 0] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 0])
        + F[..., 0, 2] * (F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0])
    )


def trace3(A: torch.Tensor) -> torch.Tensor:
    return A[..., 0, 0] + A[..., 1, 1] + A[..., 2, 2]


def frobenius_sq(A: torch.Tensor) -> torch.Tensor:
    return (A * A).sum(dim=(-2, -1))


def frac_pow(x: torch.Tensor, p: float, op: str = "frac_pow") -> torch.Tensor:
    """x ** p for strictly positive x."""
    if not bool((x > 0).all()):
        raise InvertedElementError(op)
    return check_finite(x**p, op)


def value_and_parameter_gradient(prog: DiffProgram, theta) -> Tuple[float, np.ndarray]:
    """
    Evaluate a program and its gradient with respect to the flat parameter vector.

    Raises:
        ContractError: If theta does not match the declared parameter count.
        NonFiniteLossError: If the loss (or an intermediate) is not finite.
    """
    t = as_tensor(theta, requires_grad=True)
    if t.ndim != 1 or t.shape[0] != prog.n_params:
        raise ContractError(f"{prog.name}: expected {prog.n_params} parameters, got {tuple(t.shape)}")
    loss = prog(t)
    check_finite(loss.detach(), f"{prog.name}:loss")
    (grad,) = torch.autograd.grad(loss, t)
    check_finite(grad, f"{prog.name}:grad")
    return float(loss.detach()), grad.detach().numpy().copy()


def evaluate(prog: DiffProgram, theta) -> float:
    """Loss value only, without building a graph."""
    with torch.no_grad():
        loss = prog(as_tensor(theta))
    check_finite(loss, f"{prog.name}:loss")
    return float(loss)


def input_directional_derivative(
    net_eval: NetEval, X: torch.Tensor, direction: torch.Tensor
) -> torch.Tensor:
    """
    Jacobian-vector product (dU/dX) . direction of a network forward map.

    The result stays in the autograd graph of the network parameters.

    Raises:
        ContractError: If direction does not have the shape of X.
    """
    X = as_tensor(X)
    direction = as_tensor(direction)
    if direction.shape != X.shape:
        raise ContractError(f"direction shape {tuple(direction.shape)} != input shape {tuple(X.shape)}")
    _, (dU,) = net_eval(X, [direction])
    return dU


def axis_seeds(n_nodes: int) -> List[torch.Tensor]:
    """Seed directions e1, e2, e3 replicated over every node."""
    eye = torch.eye(3, dtype=DTYPE)
    return [eye[k].expand(n_nodes, 3) for k in range(3)]
