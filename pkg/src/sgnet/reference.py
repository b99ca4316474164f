"""Reference solvers: analytic solution, pathwise FEM, and the coupled Galerkin FEM.

The pathwise solvers generate ground truth one realization at a time: linear
elements on a uniform mesh of (0, 1), bilinear elements on a uniform grid of
(0, 1)^2.  The coupled solver discretizes all spectral coefficients at once on
a 1-D mesh and solves the resulting block system, providing an oracle that
minimizes the same energy the Ritz-trained network minimizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import LinearOperator, cg

from .fields import FieldModel, SpectralField, draw_samples, sample_pathwise
from .spectral import GalerkinTensor, PolyFamily, gauss_rule

__all__ = [
    "Mesh1D",
    "Mesh2D",
    "CoupledSolution",
    "FieldPositivityError",
    "SolverConvergenceError",
    "exp1_exact",
    "exp1_exact_grad",
    "fem_pathwise",
    "assemble_coupled_system",
    "sga_fem_coupled",
    "mc_pathwise_reference",
]


class FieldPositivityError(ValueError):
    """The diffusion coefficient was not strictly positive at a quadrature point."""


class SolverConvergenceError(RuntimeError):
    """An iterative solve did not reach the requested tolerance."""


def exp1_exact(xi: float, x) -> np.ndarray:
    """Solution 0.5 |xi - 1| (x - x^2) of the constant-diffusion problem."""
    x = np.asarray(x, dtype=float)
    return 0.5 * abs(xi - 1.0) * (x - x * x)


def exp1_exact_grad(xi: float, x) -> np.ndarray:
    """Spatial derivative 0.5 |xi - 1| (1 - 2x)."""
    x = np.asarray(x, dtype=float)
    return 0.5 * abs(xi - 1.0) * (1.0 - 2.0 * x)


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh of [0, 1] with ``n_elem`` linear elements."""

    n_elem: int

    def __post_init__(self) -> None:
        if self.n_elem < 2:
            raise ValueError("at least two elements are required")

    @property
    def h(self) -> float:
        return 1.0 / self.n_elem

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_elem + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_elem) + 0.5) * self.h


@dataclass(frozen=True)
class Mesh2D:
    """Uniform n x n quadrilateral grid of [0, 1]^2 with bilinear elements."""

    n: int

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("at least a 2 x 2 grid is required")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def nodes1d(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 1)

    @property
    def centers1d(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h


# 2 x 2 Gauss points on the reference square, and the bilinear shape values /
# reference gradients there.  Weights are 1/4 each on the unit square.
_QP_1D = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


def _q1_reference() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    pts = np.array([[a, b] for a in _QP_1D for b in _QP_1D])
    xi, eta = pts[:, 0], pts[:, 1]
    shapes = np.stack(
        [(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=1
    )
    grads = np.empty((4, 4, 2))
    grads[:, 0] = np.stack([-(1 - eta), -(1 - xi)], axis=1)
    grads[:, 1] = np.stack([(1 - eta), -xi], axis=1)
    grads[:, 2] = np.stack([eta, xi], axis=1)
    grads[:, 3] = np.stack([-eta, (1 - xi)], axis=1)
    weights = np.full(4, 0.25)
    return pts, shapes, grads, weights


def _fem_1d(mesh: Mesh1D, a_fn: Callable, f_fn: Callable) -> np.ndarray:
    """Linear-element solve of -(a u')' = f with zero boundary values."""
    h = mesh.h
    rule = gauss_rule(PolyFamily.LEGENDRE, 2)
    # Element quadrature points and Lebesgue weights on each element.
    left = mesh.nodes[:-1]
    qp = left[:, None] + (0.5 * rule.nodes + 0.5)[None, :] * h
    qw = rule.weights[None, :] * h
    a_q = np.asarray(a_fn(qp.ravel()), dtype=float).reshape(qp.shape)
    if np.any(a_q <= 0.0):
        raise FieldPositivityError("diffusion coefficient is not positive on the mesh")
    f_q = np.asarray(f_fn(qp.ravel()), dtype=float).reshape(qp.shape)
    a_int = (a_q * qw).sum(axis=1)  # integral of a over each element
    stiff = a_int / (h * h)
    # Hat-function values at the element quadrature points.
    t = (qp - left[:, None]) / h
    load_left = (f_q * (1.0 - t) * qw).sum(axis=1)
    load_right = (f_q * t * qw).sum(axis=1)

    n_int = mesh.n_elem - 1
    diag = stiff[:-1] + stiff[1:]
    rhs = load_right[:-1] + load_left[1:]
    banded = np.zeros((3, n_int))
    banded[0, 1:] = -stiff[1:-1]
    banded[1] = diag
    banded[2, :-1] = -stiff[1:-1]
    interior = solve_banded((1, 1), banded, rhs)
    solution = np.zeros(mesh.n_elem + 1)
    solution[1:-1] = interior
    return solution


def _fem_2d(mesh: Mesh2D, a_fn: Callable, f_fn: Callable, tol: float = 1e-12) -> np.ndarray:
    """Bilinear-element solve on the unit square; returns nodal values, shape (n+1, n+1)."""
    n = mesh.n
    h = mesh.h
    pts, shapes, grads, weights = _q1_reference()
    ex, ey = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    corners = np.stack([ex.ravel(), ey.ravel()], axis=1) * h  # lower-left corner of each element
    n_elem = corners.shape[0]
    # Physical quadrature points per element, flattened to (n_elem * 4, 2).
    qp = corners[:, None, :] + pts[None, :, :] * h
    a_q = np.asarray(a_fn(qp.reshape(-1, 2)), dtype=float).reshape(n_elem, 4)
    if np.any(a_q <= 0.0):
        raise FieldPositivityError("diffusion coefficient is not positive on the mesh")
    f_q = np.asarray(f_fn(qp.reshape(-1, 2)), dtype=float).reshape(n_elem, 4)

    # Local stiffness: the h^2 Jacobian cancels the 1/h^2 of physical gradients.
    k_ref = np.einsum("q,qid,qjd->qij", weights, grads, grads)
    k_local = np.einsum("eq,qij->eij", a_q, k_ref)
    f_local = np.einsum("eq,qi,q->ei", f_q, shapes, weights) * (h * h)

    stride = n + 1
    base = ex.ravel() * stride + ey.ravel()
    local_nodes = np.stack([base, base + stride, base + stride + 1, base + 1], axis=1)

    rows = np.repeat(local_nodes, 4, axis=1).ravel()
    cols = np.tile(local_nodes, (1, 4)).ravel()
    matrix = sp.coo_matrix(
        (k_local.ravel(), (rows, cols)), shape=(stride**2, stride**2)
    ).tocsr()
    rhs = np.zeros(stride**2)
    np.add.at(rhs, local_nodes.ravel(), f_local.ravel())

    idx = np.arange(stride**2).reshape(stride, stride)
    interior = idx[1:-1, 1:-1].ravel()
    k_ii = matrix[interior][:, interior]
    diag = k_ii.diagonal()
    precond = LinearOperator(k_ii.shape, matvec=lambda v: v / diag)
    u_int, info = cg(k_ii, rhs[interior], rtol=tol, atol=0.0, M=precond, maxiter=10 * interior.size)
    if info != 0:
        raise SolverConvergenceError(f"conjugate gradient stopped with info={info}")
    solution = np.zeros(stride**2)
    solution[interior] = u_int
    return solution.reshape(stride, stride)


def fem_pathwise(mesh: Mesh1D | Mesh2D, a_fn: Callable, f_fn: Callable) -> np.ndarray:
    """Galerkin solution of -div(a grad u) = f with homogeneous Dirichlet data."""
    if isinstance(mesh, Mesh1D):
        return _fem_1d(mesh, a_fn, f_fn)
    return _fem_2d(mesh, a_fn, f_fn)


# -- coupled stochastic Galerkin FEM ------------------------------------------------


@dataclass(frozen=True)
class CoupledSolution:
    """Nodal spectral coefficients of the coupled weak-form system on a 1-D mesh."""

    mesh: Mesh1D
    coeffs: np.ndarray  # (M + 1, n_elem + 1) including the zero boundary values
    energy: float

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]


def assemble_coupled_system(
    mesh: Mesh1D, field_: SpectralField, tensor: GalerkinTensor
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Block stiffness matrix and load vector of the coupled weak form.

    Degrees of freedom are node-major: dof = (node - 1) * (M + 1) + coefficient,
    so the per-node coupling blocks are contiguous for block-Jacobi use.
    """
    size = field_.size
    h = mesh.h
    rule = gauss_rule(PolyFamily.LEGENDRE, 3)
    left = mesh.nodes[:-1]
    qp = left[:, None] + (0.5 * rule.nodes + 0.5)[None, :] * h
    qw = rule.weights[None, :] * h

    a_vals = field_.coeff_values(qp.reshape(-1, 1)).reshape(mesh.n_elem, rule.nodes.size, size)
    f_vals = field_.forcing_values(qp.reshape(-1, 1)).reshape(mesh.n_elem, rule.nodes.size, size)
    # Element integrals of A_ij and of f_k against the two hat functions.
    a_blocks = np.einsum("eqi,ijk,eq->ejk", a_vals, tensor.values, qw)
    t = (qp - left[:, None]) / h
    f_left = np.einsum("eqk,eq,eq->ek", f_vals, 1.0 - t, qw)
    f_right = np.einsum("eqk,eq,eq->ek", f_vals, t, qw)

    n_int = mesh.n_elem - 1
    n_dof = n_int * size
    inv_h2 = 1.0 / (h * h)

    blocks_diag = (a_blocks[:-1] + a_blocks[1:]) * inv_h2  # per interior node
    blocks_off = -a_blocks[1:-1] * inv_h2  # between consecutive interior nodes

    data: list[np.ndarray] = []
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    block_i, block_j = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    for node in range(n_int):
        offset = node * size
        data.append(blocks_diag[node].ravel())
        rows.append((offset + block_i).ravel())
        cols.append((offset + block_j).ravel())
    for node in range(n_int - 1):
        offset = node * size
        block = blocks_off[node]
        data.extend([block.ravel(), block.T.ravel()])
        rows.extend([(offset + block_i).ravel(), (offset + size + block_i).ravel()])
        cols.extend([(offset + size + block_j).ravel(), (offset + block_j).ravel()])
    matrix = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_dof, n_dof),
    ).tocsr()
    load = (f_right[:-1] + f_left[1:]).reshape(n_dof)
    return matrix, load


def sga_fem_coupled(
    mesh: Mesh1D, field_: SpectralField, tensor: GalerkinTensor, tol: float = 1e-12
) -> CoupledSolution:
    """Solve the coupled weak form by CG with a per-node block-Jacobi preconditioner."""
    size = field_.size
    matrix, load = assemble_coupled_system(mesh, field_, tensor)
    n_int = mesh.n_elem - 1
    diag_blocks = np.empty((n_int, size, size))
    for node in range(n_int):
        offset = node * size
        diag_blocks[node] = matrix[offset : offset + size, offset : offset + size].toarray()
    inv_blocks = np.linalg.inv(diag_blocks)

    def apply_precond(v: np.ndarray) -> np.ndarray:
        return np.einsum("nij,nj->ni", inv_blocks, v.reshape(n_int, size)).ravel()

    precond = LinearOperator(matrix.shape, matvec=apply_precond)
    u, info = cg(matrix, load, rtol=tol, atol=0.0, M=precond, maxiter=10 * load.size)
    if info != 0:
        raise SolverConvergenceError(
            f"coupled solve did not converge (info={info}); the truncated coefficient "
            "may not be positive definite"
        )
    energy = 0.5 * float(u @ (matrix @ u)) - float(load @ u)
    coeffs = np.zeros((size, mesh.n_elem + 1))
    coeffs[:, 1:-1] = u.reshape(n_int, size).T
    return CoupledSolution(mesh, coeffs, energy)


def mc_pathwise_reference(
    model: FieldModel,
    mesh: Mesh1D | Mesh2D,
    n_mc: int,
    seed: int,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Stream of (sample, nodal FEM solution) pairs over i.i.d. realizations."""
    rng = np.random.default_rng(seed)
    samples = draw_samples(model.family, model.n_vars, n_mc, rng)
    for m in range(n_mc):
        y = samples[m]
        if isinstance(mesh, Mesh1D):
            a_fn = lambda x: sample_pathwise(model, y, x.reshape(-1, 1))[0]
            f_fn = lambda x: sample_pathwise(model, y, x.reshape(-1, 1))[1]
        else:
            a_fn = lambda x: sample_pathwise(model, y, x)[0]
            f_fn = lambda x: sample_pathwise(model, y, x)[1]
        yield y, fem_pathwise(mesh, a_fn, f_fn)
