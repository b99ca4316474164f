"""Loss assembly, quasi-random sampling, ADAM and the training loop.

Two risks are provided.  The strong risk is the mean over a batch of the
averaged squared projections of the pointwise PDE residual onto the basis; it
requires second derivatives of the network.  The Ritz risk is the Monte Carlo
estimate of the quadratic energy functional whose unique minimizer solves the
weak-form coupled system; it requires first derivatives only and is negative
at the minimum.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .fields import SpectralField, draw_samples
from .net import MultiBranchNet
from .spectral import GalerkinTensor, OrderedBasis, basis_matrix

__all__ = [
    "AdamState",
    "SobolStream",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "adam_step",
    "sobol_batch",
    "assemble_A",
    "assemble_B",
    "strong_residual_matrix",
    "strong_risk",
    "ritz_density",
    "ritz_risk",
    "validation_error",
    "default_validation_grid",
    "train",
]


class TrainingDivergedError(RuntimeError):
    """Raised when a risk or gradient stops being finite during training."""


# -- operator assembly ---------------------------------------------------------


def assemble_A(tensor: GalerkinTensor, coeff_values: np.ndarray) -> np.ndarray:
    """Per-point coupling matrices A_jk(x) = sum_i a_i(x) G_ijk, shape (n, K, K)."""
    return np.einsum("ni,ijk->njk", coeff_values, tensor.values)


def assemble_B(tensor: GalerkinTensor, coeff_grads: np.ndarray) -> np.ndarray:
    """Per-point gradient couplings B_jk(x) = sum_i grad a_i(x) G_ijk, shape (n, K, K, d)."""
    return np.einsum("nid,ijk->njkd", coeff_grads, tensor.values)


def strong_residual_matrix(
    a_matrix: np.ndarray,
    b_tensor: np.ndarray,
    forcing: np.ndarray,
    laplacian: np.ndarray,
    gradient: np.ndarray,
) -> np.ndarray:
    """Projected residuals r_k(x) = sum_j (A_jk lap u_j + B_jk . grad u_j) + f_k."""
    residual = np.einsum("njk,nj->nk", a_matrix, laplacian)
    residual += np.einsum("njkd,njd->nk", b_tensor, gradient)
    residual += forcing
    return residual


def strong_risk(
    x: np.ndarray,
    net: MultiBranchNet,
    field_: SpectralField,
    tensor: GalerkinTensor,
    domain_volume: float = 1.0,
    with_grad: bool = True,
):
    """Mean squared projected strong residual over the batch, with parameter gradient."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    size = field_.size
    if net.n_branches != size:
        raise ValueError(f"network has {net.n_branches} branches, field expects {size}")
    record = net.evaluate(x, order=2)
    a_matrix = assemble_A(tensor, field_.coeff_values(x))
    b_tensor = assemble_B(tensor, field_.coeff_grads(x))
    forcing = field_.forcing_values(x)
    residual = strong_residual_matrix(a_matrix, b_tensor, forcing, record.laplacian, record.grad)
    risk = domain_volume * float(np.mean(residual * residual) )
    if not with_grad:
        return risk, None
    # d risk / d r_nk, then chain through the linear residual assembly.
    r_bar = residual * (2.0 * domain_volume / (n * size))
    d_lap = np.einsum("njk,nk->nj", a_matrix, r_bar)
    d_grad = np.einsum("njkd,nk->njd", b_tensor, r_bar)
    return risk, net.param_grad(record, d_grad=d_grad, d_lap=d_lap)


def ritz_density(
    a_matrix: np.ndarray,
    forcing: np.ndarray,
    value: np.ndarray,
    gradient: np.ndarray,
) -> np.ndarray:
    """Energy density 1/2 sum_ij A_ij grad u_i . grad u_j - sum_k f_k u_k per point."""
    flux = np.einsum("nij,njd->nid", a_matrix, gradient)
    return 0.5 * np.einsum("nid,nid->n", gradient, flux) - np.einsum("nk,nk->n", forcing, value)


def ritz_risk(
    x: np.ndarray,
    net: MultiBranchNet,
    field_: SpectralField,
    tensor: GalerkinTensor,
    domain_volume: float = 1.0,
    with_grad: bool = True,
):
    """Monte Carlo Ritz energy over the batch, with parameter gradient."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    size = field_.size
    if net.n_branches != size:
        raise ValueError(f"network has {net.n_branches} branches, field expects {size}")
    record = net.evaluate(x, order=1)
    a_matrix = assemble_A(tensor, field_.coeff_values(x))
    forcing = field_.forcing_values(x)
    risk = domain_volume * float(np.mean(ritz_density(a_matrix, forcing, record.value, record.grad)))
    if not with_grad:
        return risk, None
    scale = domain_volume / n
    d_grad = scale * np.einsum("nij,njd->nid", a_matrix, record.grad)
    d_value = -scale * forcing
    return risk, net.param_grad(record, d_value=d_value, d_grad=d_grad)


# -- validation ------------------------------------------------------------------


def validation_error(
    net: MultiBranchNet,
    field_: SpectralField,
    basis: OrderedBasis,
    n_samples: int = 10_000,
    x_grid: np.ndarray | None = None,
    seed: int = 0,
    chunk: int = 2_000,
) -> float:
    """Mean squared pathwise strong residual over sampled realizations.

    The diffusion, forcing and network approximation are reconstructed from
    their spectral coefficients at every sampled realization, and the strong
    residual of the original PDE is averaged in squares over samples and grid
    points.  The field must be unweighted: the residual is that of the
    original equation regardless of how the network was trained.
    """
    if field_.weighting != "none":
        raise ValueError("validation uses the unweighted expansion")
    if x_grid is None:
        x_grid = default_validation_grid(field_.spatial_dim)
    x_grid = np.atleast_2d(np.asarray(x_grid, dtype=float))
    record = net.evaluate(x_grid, order=2)
    a_values = field_.coeff_values(x_grid)
    a_grads = field_.coeff_grads(x_grid)
    f_values = field_.forcing_values(x_grid)
    rng = np.random.default_rng(seed)
    samples = draw_samples(basis.families[0], basis.n_dims, n_samples, rng)
    total = 0.0
    for start in range(0, n_samples, chunk):
        block = samples[start : start + chunk]
        p_matrix = basis_matrix(basis, block)
        a_bar = p_matrix @ a_values.T
        f_bar = p_matrix @ f_values.T
        u_lap = p_matrix @ record.laplacian.T
        residual = a_bar * u_lap + f_bar
        for j in range(field_.spatial_dim):
            residual += (p_matrix @ a_grads[:, :, j].T) * (p_matrix @ record.grad[:, :, j].T)
        total += float(np.sum(residual * residual))
    return total / (n_samples * x_grid.shape[0])


def default_validation_grid(spatial_dim: int, n_points: int | None = None) -> np.ndarray:
    """Deterministic Sobol point set used for the validation residual."""
    if n_points is None:
        n_points = 128 if spatial_dim == 1 else 1024
    stream = SobolStream(spatial_dim, skip=1)
    return stream.next(n_points)


# -- quasi-random sampling ---------------------------------------------------------


class SobolStream:
    """Continuous stream of unscrambled Sobol points in [0, 1)^d.

    The stream is deterministic given the initial skip; the skip must be at
    least one so the origin point of the sequence is never emitted.
    """

    def __init__(self, dim: int, skip: int = 1) -> None:
        if dim < 1:
            raise ValueError("dimension must be positive")
        if skip < 0:
            raise ValueError("skip must be non-negative")
        self.dim = dim
        self._engine = qmc.Sobol(d=dim, scramble=False)
        if skip:
            self._engine.fast_forward(skip)
        self.index = skip

    def next(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("batch size must be positive")
        self.index += n
        return self._engine.random(n)


def sobol_batch(stream: SobolStream, n: int, lo: Sequence[float], hi: Sequence[float]) -> np.ndarray:
    """Next ``n`` stream points mapped affinely into the box [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.size != stream.dim or hi.size != stream.dim:
        raise ValueError("box dimension does not match the stream")
    return lo + stream.next(n) * (hi - lo)


# -- optimizer ----------------------------------------------------------------------


@dataclass
class AdamState:
    """First and second moment accumulators of the ADAM update."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n_params: int, **kwargs) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), **kwargs)


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """One bias-corrected ADAM update; mutates the state, returns the new iterate."""
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise ValueError("parameter, gradient and state dimensions disagree")
    if not np.all(np.isfinite(grad)):
        raise TrainingDivergedError("non-finite gradient entries")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)


# -- training loop --------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Schedule, learning-rate decay, stopping rules and seeds for one training run."""

    batch_size: int = 512
    steps_per_epoch: int = 50
    max_epochs: int = 1000
    lr0: float = 1e-3
    lr_decay: float = 0.97
    lr_decay_steps: int = 200
    patience: int = 50
    risk_threshold: float | None = 1e-7
    validation_interval: int = 10
    validation_samples: int = 10_000
    validation_points: int | None = None
    seed_sobol: int = 1
    seed_validation: int = 0
    domain_volume: float = 1.0
    checkpoint_interval: int | None = None

    def __post_init__(self) -> None:
        if min(self.batch_size, self.steps_per_epoch, self.max_epochs, self.lr_decay_steps) < 1:
            raise ValueError("schedule parameters must be positive")
        if self.lr0 <= 0 or not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("learning rate must be positive with decay factor in (0, 1]")
        if self.patience < 0 or self.validation_interval < 1:
            raise ValueError("patience must be non-negative, validation interval positive")


@dataclass
class TrainResult:
    """Trained network together with the per-epoch history."""

    net: MultiBranchNet
    history: list[dict]
    stop_reason: str
    train_seconds: float

    @property
    def epochs(self) -> int:
        return len(self.history)

    @property
    def final_risk(self) -> float:
        return self.history[-1]["risk"] if self.history else float("nan")

    @property
    def final_validation(self) -> float:
        for row in reversed(self.history):
            if not np.isnan(row["validation"]):
                return row["validation"]
        return float("nan")


_HISTORY_FIELDS = ("epoch", "risk", "lr", "validation", "seconds")


def _write_history_header(path: Path) -> None:
    with open(path, "w", newline="") as handle:
        csv.writer(handle).writerow(_HISTORY_FIELDS)


def _append_history_row(path: Path, row: dict) -> None:
    with open(path, "a", newline="") as handle:
        csv.writer(handle).writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in _HISTORY_FIELDS])


def train(
    net: MultiBranchNet,
    loss_kind: str,
    field_: SpectralField,
    tensor: GalerkinTensor,
    config: TrainConfig,
    validation_field: SpectralField | None = None,
    history_path: str | Path | None = None,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Train with ADAM on a continuous Sobol stream until a stopping rule fires.

    The strong loss stops when the epoch risk falls below the threshold or the
    best risk has not improved for ``patience`` epochs.  The Ritz loss has no
    interpretable risk scale, so it stops only when both the best risk and the
    best validation residual have been stale for ``patience`` epochs; the
    validation residual is evaluated every ``validation_interval`` epochs.
    """
    if loss_kind not in ("strong", "ritz"):
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    loss_fn = strong_risk if loss_kind == "strong" else ritz_risk
    dim = field_.spatial_dim
    if validation_field is None:
        validation_field = field_
    if loss_kind == "ritz" and validation_field.weighting != "none":
        raise ValueError("ritz training needs an unweighted field for validation")

    stream = SobolStream(dim, skip=max(1, config.seed_sobol))
    state = AdamState.zeros(net.n_params)
    theta = net.params_flat()
    lo, hi = np.zeros(dim), np.ones(dim)
    grid = default_validation_grid(dim, config.validation_points)

    if history_path is not None:
        history_path = Path(history_path)
        _write_history_header(history_path)
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    history: list[dict] = []
    best_risk = np.inf
    best_validation = np.inf
    stale_risk = 0
    stale_validation = 0
    stop_reason = "max_epochs"
    t_start = time.perf_counter()

    for epoch in range(1, config.max_epochs + 1):
        risk_sum = 0.0
        lr = config.lr0
        for _ in range(config.steps_per_epoch):
            lr = config.lr0 * config.lr_decay ** (state.t // config.lr_decay_steps)
            x = sobol_batch(stream, config.batch_size, lo, hi)
            risk, grad = loss_fn(x, net, field_, tensor, config.domain_volume)
            if not np.isfinite(risk):
                raise TrainingDivergedError(
                    f"non-finite {loss_kind} risk at epoch {epoch}, step {state.t}"
                )
            try:
                theta = adam_step(theta, grad, state, lr)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(f"{exc} at epoch {epoch}, step {state.t}") from exc
            net.set_params_flat(theta)
            risk_sum += risk
        epoch_risk = risk_sum / config.steps_per_epoch

        validation = float("nan")
        if loss_kind == "ritz" and epoch % config.validation_interval == 0:
            validation = validation_error(
                net,
                validation_field,
                field_.basis,
                n_samples=config.validation_samples,
                x_grid=grid,
                seed=config.seed_validation,
            )

        row = {
            "epoch": epoch,
            "risk": epoch_risk,
            "lr": lr,
            "validation": validation,
            "seconds": time.perf_counter() - t_start,
        }
        history.append(row)
        if history_path is not None:
            _append_history_row(history_path, row)
        if checkpoint_dir is not None and config.checkpoint_interval:
            if epoch % config.checkpoint_interval == 0:
                net.save(checkpoint_dir / f"epoch_{epoch:06d}.npz")

        if epoch_risk < best_risk:
            best_risk = epoch_risk
            stale_risk = 0
        else:
            stale_risk += 1
        if not np.isnan(validation) and validation < best_validation:
            best_validation = validation
            stale_validation = 0
        elif loss_kind == "ritz":
            stale_validation += 1

        if loss_kind == "strong":
            if config.risk_threshold is not None and epoch_risk < config.risk_threshold:
                stop_reason = "risk_threshold"
                break
            if stale_risk >= config.patience:
                stop_reason = "patience"
                break
        else:
            if stale_risk >= config.patience and stale_validation >= config.patience:
                stop_reason = "patience"
                break

    return TrainResult(net, history, stop_reason, time.perf_counter() - t_start)
