"""Orthonormal polynomial families, multi-index bases, Gauss rules and triple products.

Two univariate families are supported: probabilist's Hermite polynomials,
orthonormal with respect to the standard normal distribution, and Legendre
polynomials rescaled to be orthonormal with respect to the uniform
distribution on [-1, 1].  Multivariate bases are tensor products indexed by
multi-indices of bounded total degree in graded lexicographic order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "PolyFamily",
    "QuadratureRule",
    "OrderedBasis",
    "GalerkinTensor",
    "basis_dim",
    "graded_lex_less",
    "enumerate_indices",
    "eval_univariate",
    "univariate_table",
    "eval_tensor_poly",
    "basis_matrix",
    "total_degree_basis",
    "gauss_rule",
    "tensor_gauss_rule",
    "kink_split_normal_rule",
    "project_1d",
    "galerkin_tensor",
    "save_tensor",
    "load_tensor",
]

# Hard cap on the number of basis polynomials a single basis may hold; the
# dense triple-product tensor grows with the cube of this number.
MAX_BASIS_SIZE = 200_000


class PolyFamily(Enum):
    """Univariate orthonormal family together with its probability measure."""

    HERMITE = "hermite"
    LEGENDRE = "legendre"


def basis_dim(n_dims: int, max_degree: int) -> int:
    """Number of multi-indices of length ``n_dims`` with total degree <= ``max_degree``."""
    if n_dims < 1 or max_degree < 0:
        raise ValueError(f"invalid basis shape: N={n_dims}, P={max_degree}")
    return math.comb(n_dims + max_degree, max_degree)


def graded_lex_less(nu1: Sequence[int], nu2: Sequence[int]) -> bool:
    """Strict graded lexicographic comparison of two equal-length multi-indices.

    Orders first by total degree, then lexicographically on the first
    differing entry (smaller entry first).
    """
    if len(nu1) != len(nu2):
        raise ValueError(f"length mismatch: {len(nu1)} vs {len(nu2)}")
    d1, d2 = sum(nu1), sum(nu2)
    if d1 != d2:
        return d1 < d2
    return tuple(nu1) < tuple(nu2)


def enumerate_indices(n_dims: int, max_degree: int) -> list[tuple[int, ...]]:
    """All multi-indices with total degree <= ``max_degree`` in graded lex order."""
    size = basis_dim(n_dims, max_degree)
    if size > MAX_BASIS_SIZE:
        raise ValueError(
            f"basis with N={n_dims}, P={max_degree} has {size} elements, "
            f"exceeding the cap of {MAX_BASIS_SIZE}"
        )

    def compositions(total: int, slots: int) -> Iterable[tuple[int, ...]]:
        if slots == 1:
            yield (total,)
            return
        for head in range(total + 1):
            for tail in compositions(total - head, slots - 1):
                yield (head,) + tail

    out: list[tuple[int, ...]] = []
    for degree in range(max_degree + 1):
        out.extend(sorted(compositions(degree, n_dims)))
    return out


def _hermite_table(max_degree: int, y: np.ndarray) -> np.ndarray:
    """Orthonormal probabilist's Hermite values h_0..h_P at points ``y``."""
    table = np.empty((y.size, max_degree + 1))
    table[:, 0] = 1.0
    if max_degree >= 1:
        table[:, 1] = y
    for k in range(1, max_degree):
        table[:, k + 1] = (y * table[:, k] - math.sqrt(k) * table[:, k - 1]) / math.sqrt(k + 1)
    return table


def _legendre_table(max_degree: int, y: np.ndarray) -> np.ndarray:
    """Orthonormal Legendre values p_0..p_P at points ``y`` (uniform on [-1, 1])."""
    mono = np.empty((y.size, max_degree + 1))
    mono[:, 0] = 1.0
    if max_degree >= 1:
        mono[:, 1] = y
    for k in range(1, max_degree):
        mono[:, k + 1] = ((2 * k + 1) * y * mono[:, k] - k * mono[:, k - 1]) / (k + 1)
    return mono * np.sqrt(2.0 * np.arange(max_degree + 1) + 1.0)


def univariate_table(family: PolyFamily, max_degree: int, y: np.ndarray) -> np.ndarray:
    """Table of orthonormal polynomial values, shape ``(len(y), max_degree + 1)``."""
    if max_degree < 0:
        raise ValueError("max_degree must be non-negative")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if family is PolyFamily.HERMITE:
        return _hermite_table(max_degree, y)
    return _legendre_table(max_degree, y)


def eval_univariate(family: PolyFamily, k: int, y):
    """Value of the k-th orthonormal polynomial of ``family`` at ``y``."""
    if k < 0:
        raise ValueError("degree must be non-negative")
    arr = np.asarray(y, dtype=float)
    table = univariate_table(family, k, arr.ravel())
    vals = table[:, k].reshape(arr.shape)
    return float(vals) if arr.ndim == 0 else vals


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a quadrature rule against a probability measure."""

    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)


def gauss_rule(family: PolyFamily, n: int) -> QuadratureRule:
    """Gauss rule with ``n`` nodes for the family's probability measure.

    Built by the Golub-Welsch eigen-decomposition of the Jacobi matrix of the
    three-term recurrence; exact for polynomials of degree <= 2n - 1, with
    weights summing to one.
    """
    if n < 1:
        raise ValueError("node count must be positive")
    if n == 1:
        return QuadratureRule(np.zeros(1), np.ones(1))
    k = np.arange(1, n, dtype=float)
    if family is PolyFamily.HERMITE:
        offdiag = np.sqrt(k)
    else:
        offdiag = k / np.sqrt(4.0 * k * k - 1.0)
    try:
        nodes, vectors = eigh_tridiagonal(np.zeros(n), offdiag)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - numerical breakdown
        raise RuntimeError(f"Jacobi eigen-solve failed for n={n}") from exc
    weights = vectors[0] ** 2
    return QuadratureRule(nodes, weights)


def _gauss_legendre_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Plain Gauss-Legendre nodes on [-1, 1] with Lebesgue weights (sum 2)."""
    rule = gauss_rule(PolyFamily.LEGENDRE, n)
    return rule.nodes, 2.0 * rule.weights


def kink_split_normal_rule(
    kinks: Sequence[float] = (),
    radius: float = 12.0,
    panel_width: float = 0.25,
    nodes_per_panel: int = 24,
) -> QuadratureRule:
    """Composite Gauss rule against the standard normal measure on [-radius, radius].

    The interval is split at the given kink locations so that integrands that
    are only piecewise smooth (e.g. with an absolute value) are integrated
    panel by panel where they are analytic.  The normal tail beyond the
    truncation radius carries mass below 1e-30 for the default radius.
    """
    breaks = sorted({-radius, radius, *(float(c) for c in kinks if -radius < c < radius)})
    base_nodes, base_weights = _gauss_legendre_unit(nodes_per_panel)
    nodes: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        n_panels = max(1, int(math.ceil((hi - lo) / panel_width)))
        edges = np.linspace(lo, hi, n_panels + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            nodes.append(half * base_nodes + 0.5 * (a + b))
            weights.append(half * base_weights)
    x = np.concatenate(nodes)
    w = np.concatenate(weights) * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return QuadratureRule(x, w)


def project_1d(g: Callable[[np.ndarray], np.ndarray], family: PolyFamily, k: int, rule: QuadratureRule) -> float:
    """Spectral coefficient <g, p_k> approximated with the given rule."""
    values = np.asarray(g(rule.nodes), dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("integrand produced non-finite values at quadrature nodes")
    basis_vals = univariate_table(family, k, rule.nodes)[:, k]
    return float(np.sum(rule.weights * values * basis_vals))


@dataclass(frozen=True)
class OrderedBasis:
    """Truncated tensor-product basis in graded lexicographic order.

    ``indices[k]`` is the multi-index of the k-th basis polynomial; the basis
    holds all (N + P)! / (N! P!) multi-indices of total degree at most P.
    """

    n_dims: int
    max_degree: int
    families: tuple[PolyFamily, ...]
    indices: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.families) != self.n_dims:
            raise ValueError("one family per stochastic dimension is required")
        if len(self.indices) != basis_dim(self.n_dims, self.max_degree):
            raise ValueError("index list does not match the dimension formula")

    @property
    def size(self) -> int:
        """Number of basis polynomials, M + 1."""
        return len(self.indices)

    @property
    def index_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)

    @property
    def family(self) -> PolyFamily:
        """The common family of a homogeneous basis."""
        first = self.families[0]
        if any(f is not first for f in self.families):
            raise ValueError("basis mixes polynomial families")
        return first


def total_degree_basis(n_dims: int, max_degree: int, family: PolyFamily) -> OrderedBasis:
    """Homogeneous total-degree basis with the same family in every dimension."""
    indices = tuple(enumerate_indices(n_dims, max_degree))
    return OrderedBasis(n_dims, max_degree, (family,) * n_dims, indices)


def eval_tensor_poly(basis: OrderedBasis, k: int, y: Sequence[float]) -> float:
    """Value of the k-th tensor-product basis polynomial at a point of Gamma."""
    if not 0 <= k < basis.size:
        raise IndexError(f"basis index {k} out of range [0, {basis.size})")
    y = np.asarray(y, dtype=float).ravel()
    if y.size != basis.n_dims:
        raise ValueError(f"point has {y.size} coordinates, basis has {basis.n_dims}")
    nu = basis.indices[k]
    value = 1.0
    for dim in range(basis.n_dims):
        value *= eval_univariate(basis.families[dim], nu[dim], float(y[dim]))
    return value


def basis_matrix(basis: OrderedBasis, samples: np.ndarray) -> np.ndarray:
    """Matrix of basis values, shape ``(n_samples, M + 1)``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[1] != basis.n_dims:
        raise ValueError(f"samples have {samples.shape[1]} coordinates, basis has {basis.n_dims}")
    index_array = basis.index_array
    out = np.ones((samples.shape[0], basis.size))
    for dim in range(basis.n_dims):
        table = univariate_table(basis.families[dim], basis.max_degree, samples[:, dim])
        out *= table[:, index_array[:, dim]]
    return out


def tensor_gauss_rule(basis: OrderedBasis, nodes_per_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product Gauss rule over Gamma; returns points ``(n, N)`` and weights."""
    rules = [gauss_rule(f, nodes_per_dim) for f in basis.families]
    grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.ones(points.shape[0])
    for dim, rule in enumerate(rules):
        shape = [1] * basis.n_dims
        shape[dim] = rule.weights.size
        weights = weights * np.broadcast_to(
            rule.weights.reshape(shape), [r.nodes.size for r in rules]
        ).ravel()
    return points, weights


@dataclass(frozen=True)
class GalerkinTensor:
    """Dense symmetric tensor of triple products of basis polynomials."""

    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 3 or len(set(self.values.shape)) != 1:
            raise ValueError("triple-product tensor must be a cube")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _univariate_triple_table(family: PolyFamily, max_degree: int) -> np.ndarray:
    """Symmetric table of univariate triple products for degrees <= max_degree.

    The quadrature order is exact for the degree-3P integrand with margin.
    Entries are stored once per sorted degree triple and mirrored, so equality
    under argument permutation holds bitwise.  Entries that vanish identically
    are stored as exact zeros: the zero-degree slice is the Kronecker delta
    because p_0 is the constant one, and both measures are symmetric, so
    triples of odd total degree integrate to zero by parity.
    """
    n_nodes = math.ceil((3 * max_degree + 1) / 2) + 2
    rule = gauss_rule(family, n_nodes)
    table = univariate_table(family, max_degree, rule.nodes)
    weighted = table * rule.weights[:, None]
    g = np.empty((max_degree + 1,) * 3)
    for a in range(max_degree + 1):
        for b in range(a, max_degree + 1):
            pair = table[:, a] * table[:, b]
            for c in range(b, max_degree + 1):
                if a == 0:
                    value = 1.0 if b == c else 0.0
                elif (a + b + c) % 2:
                    value = 0.0
                else:
                    value = float(pair @ weighted[:, c])
                g[a, b, c] = g[a, c, b] = g[b, a, c] = value
                g[b, c, a] = g[c, a, b] = g[c, b, a] = value
    return g


def galerkin_tensor(basis: OrderedBasis) -> GalerkinTensor:
    """Triple products <p_i p_j, p_k> of all basis-polynomial pairs.

    Factorizes over dimensions: every entry is the product of univariate
    triple products of the per-dimension degrees.
    """
    index_array = basis.index_array
    size = basis.size
    values = np.ones((size, size, size))
    tables: dict[PolyFamily, np.ndarray] = {}
    for dim in range(basis.n_dims):
        family = basis.families[dim]
        if family not in tables:
            tables[family] = _univariate_triple_table(family, basis.max_degree)
        g = tables[family]
        deg = index_array[:, dim]
        values *= g[deg[:, None, None], deg[None, :, None], deg[None, None, :]]
    return GalerkinTensor(values)


_TENSOR_MAGIC = b"SGGT"
_FAMILY_CODES = {PolyFamily.HERMITE: 0, PolyFamily.LEGENDRE: 1}
_FAMILY_FROM_CODE = {code: fam for fam, code in _FAMILY_CODES.items()}


def save_tensor(tensor: GalerkinTensor, family: PolyFamily, path) -> None:
    """Binary dump: magic, u32 dimension, u8 family code, little-endian f64 entries."""
    with open(path, "wb") as handle:
        handle.write(_TENSOR_MAGIC)
        handle.write(struct.pack("<IB", tensor.dim, _FAMILY_CODES[family]))
        handle.write(np.ascontiguousarray(tensor.values, dtype="<f8").tobytes())


def load_tensor(path) -> tuple[GalerkinTensor, PolyFamily]:
    """Read a tensor written by :func:`save_tensor`."""
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != _TENSOR_MAGIC:
            raise ValueError(f"not a Galerkin tensor file: bad magic {magic!r}")
        dim, code = struct.unpack("<IB", handle.read(5))
        data = np.frombuffer(handle.read(8 * dim**3), dtype="<f8")
    if data.size != dim**3:
        raise ValueError("truncated tensor file")
    if code not in _FAMILY_FROM_CODE:
        raise ValueError(f"unknown family code {code}")
    return GalerkinTensor(data.reshape(dim, dim, dim).copy()), _FAMILY_FROM_CODE[code]
