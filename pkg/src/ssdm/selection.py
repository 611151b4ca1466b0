"""Identification of constant coefficients: backward elimination and CTAR search.

Both searches evaluate candidate models through a :class:`SelectionContext`,
which holds the local-linear maps at the selection bandwidth so that a
candidate costs a few matrix-vector products.  By default ``alpha_hat`` and
``sigma2_hat`` are profiled once on the fully functional model and held
fixed across candidates; ``strict=True`` re-profiles them for each candidate
using that candidate's own smoother.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .criteria import aic, bic, effective_params
from .errors import SSDMError
from .kernels import EPANECHNIKOV, get_kernel
from .locallinear import SpatialDataset, build_smoother_cache, local_level_maps, smoother_matrix
from .profile import (
    BandwidthPolicy,
    FitResult,
    ModelSpec,
    log_det,
    maximize_alpha,
)
from .weights import WeightMatrix, alpha_interval

__all__ = [
    "SelectionContext",
    "SelectionResult",
    "TraceEntry",
    "effective_params",
    "aic",
    "bic",
    "build_selection_context",
    "fit_candidate",
    "backward_eliminate",
    "ctar_ratios",
    "ctar_select",
]

log = logging.getLogger(__name__)


@dataclass
class SelectionContext:
    data: SpatialDataset
    W: WeightMatrix
    h: float
    kernel: object
    levels: np.ndarray
    alpha_hat: float
    sigma2_hat: float
    Wy: np.ndarray
    surfaces: np.ndarray


def build_selection_context(data: SpatialDataset, W: WeightMatrix, h: float, kernel=EPANECHNIKOV) -> SelectionContext:
    """Local-linear maps at bandwidth ``h`` and the fully functional profile fit."""
    kernel = get_kernel(kernel)
    levels = local_level_maps(data, h, kernel)
    cache = build_smoother_cache(data, W, h, kernel, levels=levels)
    alpha_hat = maximize_alpha(cache, W)
    Ay = data.y - alpha_hat * cache.Wy
    return SelectionContext(
        data=data,
        W=W,
        h=float(h),
        kernel=kernel,
        levels=levels,
        alpha_hat=float(alpha_hat),
        sigma2_hat=float(cache.sigma2(alpha_hat)),
        Wy=cache.Wy,
        surfaces=np.einsum("ijk,k->ij", levels, Ay),
    )


def _candidate_operator(ctx: SelectionContext, spec: ModelSpec) -> np.ndarray:
    X = ctx.data.X
    S = smoother_matrix(ctx.data, ctx.h, ctx.kernel, levels=ctx.levels)
    for j in spec.zero_based:
        S -= X[:, j, None] * ctx.levels[:, j, :]
        S += X[:, j, None] * ctx.levels[:, j, :].mean(axis=0)[None, :]
    return S


def fit_candidate(ctx: SelectionContext, spec: ModelSpec, strict: bool = False) -> FitResult:
    """Fit one candidate model at the selection bandwidth.

    The returned fit uses the selection bandwidth for both stages, and its
    parameter count is evaluated at that bandwidth.  Constant coefficients
    are the averages of their local surfaces for every candidate, including
    the all-constant one, so all candidates share one estimator.
    """
    data = ctx.data
    spec = spec.validate(data.p)
    n, p = data.n, data.p
    if strict:
        S = _candidate_operator(ctx, spec)
        cache = build_smoother_cache(data, ctx.W, ctx.h, ctx.kernel, S=S)
        alpha = maximize_alpha(cache, ctx.W)
        sigma2 = float(cache.sigma2(alpha))
        Ay = data.y - alpha * ctx.Wy
        surface = np.einsum("ijk,k->ij", ctx.levels, Ay)
    else:
        alpha, sigma2 = ctx.alpha_hat, ctx.sigma2_hat
        Ay = data.y - alpha * ctx.Wy
        surface = ctx.surfaces.copy()
    for j in spec.zero_based:
        surface[:, j] = surface[:, j].mean()
    resid = Ay - np.einsum("ij,ij->i", data.X, surface)
    ld = log_det(alpha, ctx.W)
    rss = float(resid @ resid)
    loglik = -0.5 * n * math.log(2 * math.pi) - 0.5 * n * math.log(sigma2) + ld - rss / (2 * sigma2)
    K = effective_params(p, spec.q, ctx.kernel, ctx.h)
    fit = FitResult(
        alpha_hat=float(alpha),
        sigma2_hat=sigma2,
        beta_surface=surface,
        beta_const={j + 1: float(surface[0, j]) for j in spec.zero_based},
        loglik=float(loglik),
        n_effective_params=float(K),
        aic=0.0,
        bic=0.0,
        residuals=resid,
        log_det=float(ld),
        locations=data.locations,
        h=ctx.h,
        h1=ctx.h,
        kernel=ctx.kernel.name,
        constant_indices=spec.constant,
        covariate_names=data.covariate_names,
        alpha_interval=alpha_interval(ctx.W),
    )
    fit.aic = aic(fit, K)
    fit.bic = bic(fit, K)
    return fit


@dataclass(frozen=True)
class TraceEntry:
    model: ModelSpec
    criterion: float
    loglik: float
    step: int

    def to_dict(self) -> dict:
        return {
            "model": list(self.model.constant),
            "label": str(self.model),
            "criterion": self.criterion,
            "loglik": self.loglik,
            "step": self.step,
        }


@dataclass
class SelectionResult:
    """Outcome of a model search, with every evaluated candidate in ``trace``."""

    chosen: ModelSpec
    trace: list
    criterion: str
    algorithm: str
    bandwidth: float
    alpha_hat: float
    strict: bool = False
    ctar_ratios: list | None = None
    infeasible: list = field(default_factory=list)

    @property
    def chosen_value(self) -> float:
        return next(e.criterion for e in self.trace if e.model == self.chosen)

    def to_dict(self) -> dict:
        return {
            "chosen": list(self.chosen.constant),
            "chosen_label": str(self.chosen),
            "criterion": self.criterion,
            "algorithm": self.algorithm,
            "bandwidth": self.bandwidth,
            "alpha_hat": self.alpha_hat,
            "strict": self.strict,
            "ctar_ratios": self.ctar_ratios,
            "infeasible": [
                {"model": list(m.constant), "error": err} for m, err in self.infeasible
            ],
            "trace": [e.to_dict() for e in self.trace],
        }


def _criterion(fit: FitResult, criterion: str) -> float:
    c = criterion.lower()
    if c == "aic":
        return fit.aic
    if c == "bic":
        return fit.bic
    raise ValueError(f"unknown criterion {criterion!r}; use 'aic' or 'bic'")


def _context_for(data, W, bw, kernel, criterion, context):
    if context is not None:
        return context
    if isinstance(bw, BandwidthPolicy):
        h = bw.resolve(data).for_selection(criterion)
    else:
        h = float(bw)
    return build_selection_context(data, W, h, kernel)


def _evaluate(ctx, spec, criterion, strict, step, trace, infeasible):
    try:
        fit = fit_candidate(ctx, spec, strict=strict)
    except SSDMError as exc:
        log.warning("candidate %s infeasible: %s", spec, exc)
        infeasible.append((spec, str(exc)))
        return None
    value = _criterion(fit, criterion)
    trace.append(TraceEntry(spec, float(value), float(fit.loglik), step))
    return fit, value


def backward_eliminate(
    data: SpatialDataset,
    W: WeightMatrix,
    bw,
    kernel=EPANECHNIKOV,
    criterion: str = "bic",
    strict: bool = False,
    context: SelectionContext | None = None,
) -> SelectionResult:
    """Backward elimination starting from the all-constant model.

    At each step every single-index removal from the current constant set is
    fitted; the one with the largest log-likelihood becomes the next model.
    The search stops as soon as the criterion of the current model is strictly
    below that of its successor, or when the constant set is empty.
    """
    ctx = _context_for(data, W, bw, kernel, criterion, context)
    p = ctx.data.p
    trace, infeasible = [], []
    current = ModelSpec.all_constant(p)
    first = _evaluate(ctx, current, criterion, strict, 0, trace, infeasible)
    if first is None:
        raise SSDMError(f"selection: starting model {current} could not be fitted")
    current_value = first[1]
    step = 0
    while current.q > 0:
        step += 1
        best = None
        for j in current.constant:
            cand = current.without(j)
            out = _evaluate(ctx, cand, criterion, strict, step, trace, infeasible)
            if out is not None and (best is None or out[0].loglik > best[1].loglik):
                best = (cand, out[0], out[1])
        if best is None:
            break
        if current_value < best[2]:
            break
        current, current_value = best[0], best[2]
    return SelectionResult(
        chosen=current,
        trace=trace,
        criterion=criterion.lower(),
        algorithm="backward",
        bandwidth=ctx.h,
        alpha_hat=ctx.alpha_hat,
        strict=strict,
        infeasible=infeasible,
    )


def ctar_ratios(fit: FitResult) -> np.ndarray:
    """Curvature-to-average ratios ``sum_i (b_j(s_i) - mean_j)^2 / mean_j^2``.

    A zero mean (within 1e-12) yields ``inf``.
    """
    B = np.asarray(fit.beta_surface, dtype=float)
    mean = B.mean(axis=0)
    dev = ((B - mean) ** 2).sum(axis=0)
    out = np.full(B.shape[1], np.inf)
    ok = np.abs(mean) > 1e-12
    out[ok] = dev[ok] / mean[ok] ** 2
    return out


def ctar_select(
    data: SpatialDataset,
    W: WeightMatrix,
    bw,
    kernel=EPANECHNIKOV,
    criterion: str = "bic",
    strict: bool = False,
    context: SelectionContext | None = None,
) -> SelectionResult:
    """CTAR search: rank coefficients by their ratio and grow the constant set.

    Models ``{i_1..i_k}`` for ``k = 0, 1, ...`` (ascending ratio) are
    evaluated until the criterion first increases; the last model before the
    increase is chosen.
    """
    ctx = _context_for(data, W, bw, kernel, criterion, context)
    p = ctx.data.p
    trace, infeasible = [], []
    full = fit_candidate(ctx, ModelSpec(), strict=strict)
    ratios = ctar_ratios(full)
    order = [int(j) + 1 for j in np.argsort(ratios, kind="stable")]
    value = _criterion(full, criterion)
    trace.append(TraceEntry(ModelSpec(), float(value), float(full.loglik), 0))
    chosen, chosen_value = ModelSpec(), value
    for k in range(1, p + 1):
        cand = ModelSpec(tuple(order[:k]))
        out = _evaluate(ctx, cand, criterion, strict, k, trace, infeasible)
        if out is None:
            break
        if out[1] > chosen_value:
            break
        chosen, chosen_value = cand, out[1]
    return SelectionResult(
        chosen=chosen,
        trace=trace,
        criterion=criterion.lower(),
        algorithm="ctar",
        bandwidth=ctx.h,
        alpha_hat=ctx.alpha_hat,
        strict=strict,
        ctar_ratios=[float(r) for r in ratios],
        infeasible=infeasible,
    )
