"""Effective parameter counts and information criteria.

The criteria are on the negative-log-likelihood scale:

    AIC = n log(sigma) - log|A| + RSS / (2 sigma^2) + K
    BIC = n log(sigma) - log|A| + RSS / (2 sigma^2) + (log n / 2) K

so the AIC penalty coefficient is 1 (half the textbook ``2K``) and the BIC
penalty is ``log(n)/2`` per parameter on the same scale.
"""
from __future__ import annotations

import math

from .kernels import KernelSpec, get_kernel

__all__ = ["effective_params", "criterion_value", "aic", "bic"]


def effective_params(p: int, q: int, kernel: KernelSpec | str, h: float) -> float:
    """Parameter count of a model with ``q`` constant and ``p - q`` functional coefficients.

    Each unknown bivariate function counts as ``(2 K(0)^2 - nu_star^2) / h^2``
    constants.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    if not 0 <= q <= p:
        raise ValueError(f"need 0 <= q <= p, got q={q}, p={p}")
    c = get_kernel(kernel).constants
    return q + (p - q) * c.df_factor / (h * h)


def criterion_value(n, sigma2, log_det, rss, penalty) -> float:
    return (
        0.5 * n * math.log(sigma2)
        - log_det
        + rss / (2.0 * sigma2)
        + penalty
    )


def aic(fit, K: float) -> float:
    """AIC of a fitted model given its parameter count ``K``."""
    return criterion_value(fit.n, fit.sigma2_hat, fit.log_det, fit.rss, K)


def bic(fit, K: float, n: float | None = None) -> float:
    """BIC: the AIC formula with penalty ``(log n / 2) K``."""
    n_pen = fit.n if n is None else n
    return criterion_value(fit.n, fit.sigma2_hat, fit.log_det, fit.rss, 0.5 * math.log(n_pen) * K)
