"""Relative L2(Omega; H1) distance between a reference and a surrogate solution.

Spatial integrals use a composite trapezoid rule on a fixed grid, stochastic
integrals a fixed-seed Monte Carlo average.  Both solutions are supplied as
batch evaluators mapping realizations to values and gradients on the grid, so
the same machinery compares networks against analytic, pathwise-FEM and
coupled-FEM references.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fields import FieldModel, draw_samples, sample_pathwise
from .net import MultiBranchNet
from .reference import CoupledSolution, Mesh1D, Mesh2D, fem_pathwise
from .spectral import OrderedBasis, basis_matrix

__all__ = [
    "SpatialGrid",
    "ErrorReport",
    "uniform_grid_1d",
    "uniform_grid_2d",
    "midpoint_grid",
    "rel_h1_error",
    "exact_exp1_evaluator",
    "net_evaluator",
    "coupled_evaluator",
    "fem_evaluator",
]

PathwiseEvaluator = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class SpatialGrid:
    """Evaluation points with trapezoid quadrature weights."""

    points: np.ndarray  # (L, d)
    weights: np.ndarray  # (L,)
    label: str

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _trapezoid_weights(axis: np.ndarray) -> np.ndarray:
    w = np.zeros_like(axis)
    gaps = np.diff(axis)
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    return w


def uniform_grid_1d(n_points: int = 257) -> SpatialGrid:
    axis = np.linspace(0.0, 1.0, n_points)
    return SpatialGrid(axis[:, None], _trapezoid_weights(axis), f"uniform:{n_points}")


def uniform_grid_2d(n_points: int = 65) -> SpatialGrid:
    axis = np.linspace(0.0, 1.0, n_points)
    w = _trapezoid_weights(axis)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    points = np.stack([xx.ravel(), yy.ravel()], axis=1)
    return SpatialGrid(points, np.outer(w, w).ravel(), f"uniform:{n_points}x{n_points}")


def midpoint_grid(mesh: Mesh1D | Mesh2D) -> SpatialGrid:
    """Element midpoints of a mesh, where FEM gradients are single-valued."""
    if isinstance(mesh, Mesh1D):
        axis = mesh.midpoints
        return SpatialGrid(axis[:, None], _trapezoid_weights(axis), f"midpoints:{mesh.n_elem}")
    axis = mesh.centers1d
    w = _trapezoid_weights(axis)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    points = np.stack([xx.ravel(), yy.ravel()], axis=1)
    return SpatialGrid(points, np.outer(w, w).ravel(), f"midpoints:{mesh.n}x{mesh.n}")


@dataclass(frozen=True)
class ErrorReport:
    """Relative H1 error with its Monte Carlo ingredients."""

    rel_error: float
    numerator: float
    denominator: float
    n_mc: int
    grid: str
    mc_standard_error: float


def rel_h1_error(
    reference: PathwiseEvaluator,
    surrogate: PathwiseEvaluator,
    grid: SpatialGrid,
    model: FieldModel,
    n_mc: int = 10_000,
    seed: int = 0,
    chunk: int = 512,
) -> ErrorReport:
    """Monte Carlo estimate of ||u - v|| / ||u|| in the L2(Omega; H1) norm.

    Per realization, the squared H1 distance and the squared H1 norm of the
    reference are integrated on the grid by the trapezoid rule; both are then
    averaged over realizations and the ratio of square roots is returned.
    """
    rng = np.random.default_rng(seed)
    samples = draw_samples(model.family, model.n_vars, n_mc, rng)
    numerator_terms = np.empty(n_mc)
    denominator_terms = np.empty(n_mc)
    w = grid.weights
    for start in range(0, n_mc, chunk):
        block = samples[start : start + chunk]
        u, du = reference(block)
        v, dv = surrogate(block)
        diff = u - v
        diff_grad = du - dv
        numerator_terms[start : start + block.shape[0]] = (
            diff * diff + np.einsum("mld,mld->ml", diff_grad, diff_grad)
        ) @ w
        denominator_terms[start : start + block.shape[0]] = (
            u * u + np.einsum("mld,mld->ml", du, du)
        ) @ w
    numerator = float(np.mean(numerator_terms))
    denominator = float(np.mean(denominator_terms))
    if denominator <= 0.0:
        raise ValueError("degenerate reference: zero H1 norm")
    std_err = float(np.std(numerator_terms, ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else 0.0
    return ErrorReport(
        rel_error=float(np.sqrt(numerator / denominator)),
        numerator=numerator,
        denominator=denominator,
        n_mc=n_mc,
        grid=grid.label,
        mc_standard_error=std_err,
    )


# -- evaluators ---------------------------------------------------------------------


def exact_exp1_evaluator(grid: SpatialGrid) -> PathwiseEvaluator:
    """Closed-form solution of the constant-diffusion problem on the grid."""
    x = grid.points[:, 0]
    shape = (x - x * x)[None, :]
    slope = (1.0 - 2.0 * x)[None, :]

    def evaluate(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        amp = 0.5 * np.abs(samples[:, 0] - 1.0)[:, None]
        return amp * shape, (amp * slope)[:, :, None]

    return evaluate


def net_evaluator(
    net: MultiBranchNet, basis: OrderedBasis, grid: SpatialGrid, scale: float = 1.0
) -> PathwiseEvaluator:
    """Reconstruction sum_k U_k(x) p_k(y) of a trained network on the grid."""
    record = net.evaluate(grid.points, order=1)
    values = scale * record.value  # (L, K)
    grads = scale * record.grad  # (L, K, d)

    def evaluate(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = basis_matrix(basis, samples)
        return p @ values.T, np.einsum("mk,lkd->mld", p, grads)

    return evaluate


def coupled_evaluator(
    solution: CoupledSolution, basis: OrderedBasis, grid: SpatialGrid
) -> PathwiseEvaluator:
    """Reconstruction of a coupled-FEM solution, linear in space on each element."""
    mesh = solution.mesh
    x = grid.points[:, 0]
    elem = np.clip((x / mesh.h).astype(int), 0, mesh.n_elem - 1)
    t = (x - mesh.nodes[elem]) / mesh.h
    left = solution.coeffs[:, elem]
    right = solution.coeffs[:, elem + 1]
    values = ((1.0 - t) * left + t * right).T  # (L, K)
    grads = ((right - left) / mesh.h).T[:, :, None]  # (L, K, 1)

    def evaluate(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = basis_matrix(basis, samples)
        return p @ values.T, np.einsum("mk,lkd->mld", p, grads)

    return evaluate


def _interp_1d(mesh: Mesh1D, nodal: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    elem = np.clip((x / mesh.h).astype(int), 0, mesh.n_elem - 1)
    t = (x - mesh.nodes[elem]) / mesh.h
    left, right = nodal[elem], nodal[elem + 1]
    return (1.0 - t) * left + t * right, (right - left) / mesh.h


def _interp_2d(mesh: Mesh2D, nodal: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = mesh.h
    ix = np.clip((pts[:, 0] / h).astype(int), 0, mesh.n - 1)
    iy = np.clip((pts[:, 1] / h).astype(int), 0, mesh.n - 1)
    tx = pts[:, 0] / h - ix
    ty = pts[:, 1] / h - iy
    c00 = nodal[ix, iy]
    c10 = nodal[ix + 1, iy]
    c11 = nodal[ix + 1, iy + 1]
    c01 = nodal[ix, iy + 1]
    value = (
        c00 * (1 - tx) * (1 - ty) + c10 * tx * (1 - ty) + c11 * tx * ty + c01 * (1 - tx) * ty
    )
    gx = ((c10 - c00) * (1 - ty) + (c11 - c01) * ty) / h
    gy = ((c01 - c00) * (1 - tx) + (c11 - c10) * tx) / h
    return value, np.stack([gx, gy], axis=1)


def fem_evaluator(
    model: FieldModel, mesh: Mesh1D | Mesh2D, grid: SpatialGrid
) -> PathwiseEvaluator:
    """Pathwise FEM reference on the grid; one solve per realization."""

    def evaluate(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = samples.shape[0]
        values = np.empty((m, grid.points.shape[0]))
        grads = np.empty((m, grid.points.shape[0], grid.dim))
        for i in range(m):
            y = samples[i]
            if isinstance(mesh, Mesh1D):
                nodal = fem_pathwise(
                    mesh,
                    lambda x: sample_pathwise(model, y, x.reshape(-1, 1))[0],
                    lambda x: sample_pathwise(model, y, x.reshape(-1, 1))[1],
                )
                values[i], grads[i, :, 0] = _interp_1d(mesh, nodal, grid.points[:, 0])
            else:
                nodal = fem_pathwise(
                    mesh,
                    lambda x: sample_pathwise(model, y, x)[0],
                    lambda x: sample_pathwise(model, y, x)[1],
                )
                values[i], grads[i] = _interp_2d(mesh, nodal, grid.points)
        return values, grads

    return evaluate
