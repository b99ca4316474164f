"""Stochastic Galerkin solver for elliptic random PDEs with neural surrogates.

The package couples a polynomial chaos discretization of the stochastic space
with feedforward networks for the spectral coefficient functions, trained
either on the strong residual of the coupled system or on its Ritz energy.
Classical finite-element solvers and an H1 error metric provide ground truth.
"""

from .spectral import (
    GalerkinTensor,
    OrderedBasis,
    PolyFamily,
    QuadratureRule,
    galerkin_tensor,
    total_degree_basis,
)
from .fields import FieldModel, SpectralField, field_model, make_spectral_field
from .net import BranchSpec, Enforcer, MultiBranchNet, enforcer_for
from .solver import SobolStream, TrainConfig, TrainResult, ritz_risk, strong_risk, train, validation_error
from .metrics import ErrorReport, rel_h1_error

__version__ = "0.1.0"

__all__ = [
    "BranchSpec",
    "Enforcer",
    "ErrorReport",
    "FieldModel",
    "GalerkinTensor",
    "MultiBranchNet",
    "OrderedBasis",
    "PolyFamily",
    "QuadratureRule",
    "SobolStream",
    "SpectralField",
    "TrainConfig",
    "TrainResult",
    "enforcer_for",
    "field_model",
    "galerkin_tensor",
    "make_spectral_field",
    "rel_h1_error",
    "ritz_risk",
    "strong_risk",
    "total_degree_basis",
    "train",
    "validation_error",
]
