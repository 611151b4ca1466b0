"""Semiparametric spatial dynamic model: profile-likelihood fitting with
local-linear coefficient surfaces, AIC/BIC identification of constant
coefficients, Monte Carlo studies and residual diagnostics."""

__version__ = "0.1.0"

from .errors import BandwidthTooSmall, DataError, FormatVersionError, NumericalError, SSDMError
from .kernels import EPANECHNIKOV, GAUSSIAN, QUARTIC, KernelConstants, KernelSpec, get_kernel
from .weights import WeightMatrix, alpha_interval, build_exp_decay_weights, load_weights
from .locallinear import SpatialDataset, local_linear_fit, smoother_matrix, build_smoother_cache
from .criteria import aic, bic, effective_params
from .profile import (
    BandwidthPolicy,
    FitResult,
    ModelSpec,
    concentrated_loglik,
    estimate,
    log_det,
    maximize_alpha,
    standard_errors,
)
from .selection import SelectionResult, backward_eliminate, ctar_select
from .diagnostics import DiagnosticsReport, residual_diagnostics

__all__ = [
    "__version__",
    "SSDMError",
    "DataError",
    "NumericalError",
    "BandwidthTooSmall",
    "FormatVersionError",
    "EPANECHNIKOV",
    "QUARTIC",
    "GAUSSIAN",
    "KernelConstants",
    "KernelSpec",
    "get_kernel",
    "WeightMatrix",
    "alpha_interval",
    "build_exp_decay_weights",
    "load_weights",
    "SpatialDataset",
    "local_linear_fit",
    "smoother_matrix",
    "build_smoother_cache",
    "aic",
    "bic",
    "effective_params",
    "BandwidthPolicy",
    "FitResult",
    "ModelSpec",
    "concentrated_loglik",
    "estimate",
    "log_det",
    "maximize_alpha",
    "standard_errors",
    "SelectionResult",
    "backward_eliminate",
    "ctar_select",
    "DiagnosticsReport",
    "residual_diagnostics",
]
