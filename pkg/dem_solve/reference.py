"""
Direct minimization of the discrete shape-function energy over nodal displacements.

The oracle shares the element tables and energy with SF-mode training, so a
difference between the two isolates the network parametrization. Gradients are
assembled from the closed-form stress through the transposed element operator;
no automatic differentiation is involved.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import torch
from scipy.optimize import minimize
from scipy.sparse.linalg import cg

from .assembly import DemProblem, TractionSpec
from .errors import NonFiniteLossError, OracleFailureError
from .grid import HexMesh
from .materials import LinearElastic, MaterialModel
from .models import DirichletBC

logger = logging.getLogger(__name__)

LE_TOL = 1e-10
NH_TOL = 1e-8
MAX_STEP_HALVINGS = 5


@dataclass
class OracleSolution:
    U_ref: np.ndarray
    energy: float
    iterations: int
    residual_norm: float
    step_energies: List[float] = field(default_factory=list)


def _dof_map(mesh: HexMesh) -> np.ndarray:
    """Global dof ids (E, 24) of every element, dof = 3 * node + component."""
    dofs = 3 * mesh.elements[:, :, None] + np.arange(3)[None, None, :]
    return dofs.reshape(len(mesh.elements), 24)


def _free_dofs(problem: DemProblem) -> np.ndarray:
    bc = problem.bc
    coords = problem.mesh.grid.coords
    clamped = np.isclose(coords[:, bc.axis], bc.value, rtol=0.0, atol=1e-12)
    free = np.repeat(~clamped, 3)
    return np.flatnonzero(free)


def assemble_stiffness(problem: DemProblem) -> sp.csr_matrix:
    """Global stiffness of the linear law on the problem's element rule."""
    lam, mu = problem.material.lame
    B, dV = problem.sf.B_np, problem.sf.dV_np
    Ke = lam * np.einsum("eg,egai,egbj->eaibj", dV, B, B)
    Ke += mu * np.einsum("eg,egaj,egbi->eaibj", dV, B, B)
    BB = mu * np.einsum("eg,egak,egbk->eab", dV, B, B)
    Ke += BB[:, :, None, :, None] * np.eye(3)[None, None, :, None, :]
    n_el = len(problem.mesh.elements)
    Ke = Ke.reshape(n_el, 24, 24)
    dofs = _dof_map(problem.mesh)
    rows = np.repeat(dofs, 24, axis=1).ravel()
    cols = np.tile(dofs, (1, 24)).ravel()
    n = 3 * problem.mesh.grid.n_nodes
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _solve_linear(problem: DemProblem, tol: float, max_iter: Optional[int]) -> OracleSolution:
    n = problem.mesh.grid.n_nodes
    f = problem.external_load_vector().ravel()
    free = _free_dofs(problem)
    f_free = f[free]
    if not np.any(f_free):
        return OracleSolution(np.zeros((n, 3)), 0.0, 0, 0.0, [0.0])

    K = assemble_stiffness(problem)[free][:, free].tocsr()
    M = sp.diags(1.0 / K.diagonal())
    iterations = [0]

    def count(_):
        iterations[0] += 1

    u_free, info = cg(K, f_free, rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=count)
    if info != 0:
        raise OracleFailureError(f"conjugate gradients stopped with info={info} after {iterations[0]} iterations")
    residual = float(np.linalg.norm(K @ u_free - f_free) / np.linalg.norm(f_free))

    U = np.zeros(3 * n)
    U[free] = u_free
    U = U.reshape(n, 3)
    energy = float(problem.potential_energy(U))
    logger.info("Linear oracle: %d CG iterations, residual %.2e, energy %.6e", iterations[0], residual, energy)
    return OracleSolution(U, energy, iterations[0], residual, [energy])


class _HyperelasticObjective:
    """psi(U) and its gradient over the free dofs at a given load factor."""

    def __init__(self, problem: DemProblem, free: np.ndarray):
        self.problem = problem
        self.free = free
        self.n = problem.mesh.grid.n_nodes
        self.f = problem.external_load_vector().ravel()
        self.factor = 1.0

    def _full(self, u_free: np.ndarray) -> np.ndarray:
        U = np.zeros(3 * self.n)
        U[self.free] = u_free
        return U.reshape(self.n, 3)

    def gradient_full(self, U: np.ndarray) -> np.ndarray:
        sf = self.problem.sf
        with torch.no_grad():
            gradu = sf.gradients(torch.as_tensor(U))
            P = self.problem.material.stress(gradu).numpy()
        nodal = np.einsum("eg,egij,egaj->eai", sf.dV_np, P, sf.B_np)
        g = np.zeros((self.n, 3))
        np.add.at(g, self.problem.mesh.elements, nodal)
        return g.ravel() - self.factor * self.f

    def __call__(self, u_free: np.ndarray) -> Tuple[float, np.ndarray]:
        U = self._full(u_free)
        try:
            with torch.no_grad():
                internal = float(self.problem.internal_energy(torch.as_tensor(U)))
            g = self.gradient_full(U)
        except NonFiniteLossError:
            return np.inf, np.zeros_like(u_free)
        value = internal - self.factor * float(self.f @ U.ravel())
        return value, g[self.free]


def _accepted(res, obj: _HyperelasticObjective) -> bool:
    if not np.isfinite(res.fun):
        return False
    if res.success:
        return True
    # line-search stalls near the optimum still count when the residual is small
    g = obj.gradient_full(obj._full(res.x))[obj.free]
    return float(np.linalg.norm(g)) <= 1e-6 * max(float(np.linalg.norm(obj.factor * obj.f[obj.free])), 1.0)


def _solve_hyperelastic(problem: DemProblem, tol: float, load_steps: int, max_iter: Optional[int]) -> OracleSolution:
    n = problem.mesh.grid.n_nodes
    free = _free_dofs(problem)
    obj = _HyperelasticObjective(problem, free)
    if not np.any(obj.f[free]):
        return OracleSolution(np.zeros((n, 3)), 0.0, 0, 0.0, [0.0] * load_steps)

    u = np.zeros(free.size)
    options = {"maxiter": max_iter or 20000, "gtol": tol, "ftol": 1e-15, "maxcor": 20}
    factor, increment = 0.0, 1.0 / load_steps
    step_energies, iterations, halvings = [], 0, 0
    while factor < 1.0 - 1e-12:
        target = min(1.0, factor + increment)
        obj.factor = target
        res = minimize(obj, u, jac=True, method="L-BFGS-B", options=options)
        iterations += int(res.nit)
        if not _accepted(res, obj):
            halvings += 1
            if halvings > MAX_STEP_HALVINGS:
                raise OracleFailureError(
                    f"load factor {target:.4f} did not converge after {MAX_STEP_HALVINGS} halvings: {res.message}"
                )
            increment *= 0.5
            logger.warning("Oracle step to load factor %.4f failed (%s), halving increment", target, res.message)
            continue
        u, factor, halvings = res.x, target, 0
        step_energies.append(float(res.fun))
        logger.debug("Oracle load factor %.4f energy %.6e (%d iterations)", factor, res.fun, res.nit)

    U = obj._full(u)
    obj.factor = 1.0
    residual = float(np.linalg.norm(obj.gradient_full(U)[free]) / np.linalg.norm(obj.f[free]))
    energy = float(problem.potential_energy(U))
    logger.info(
        "Hyperelastic oracle: %d increments, %d iterations, residual %.2e, energy %.6e",
        len(step_energies), iterations, residual, energy,
    )
    return OracleSolution(U, energy, iterations, residual, step_energies)


def direct_minimize(
    mesh: HexMesh,
    material: MaterialModel,
    tractions: Sequence[TractionSpec],
    bc: DirichletBC,
    tol: Optional[float] = None,
    load_steps: int = 20,
    max_iter: Optional[int] = None,
    volume_quadrature: str = "gauss_2x2x2",
) -> OracleSolution:
    """
    Minimize the SF-mode potential over all free nodal displacement components.

    The linear law is solved by preconditioned conjugate gradients on K u = f;
    Neo-Hookean by L-BFGS-B through load_steps load increments, each warm-started
    from the previous converged state.

    Raises:
        OracleFailureError: If a solve does not converge.
    """
    problem = DemProblem(mesh, material, tractions, bc, "sf", volume_quadrature)
    if isinstance(material, LinearElastic):
        return _solve_linear(problem, tol or LE_TOL, max_iter)
    return _solve_hyperelastic(problem, tol or NH_TOL, load_steps, max_iter)
