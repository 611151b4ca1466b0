"""Profile-likelihood estimation of the semiparametric spatial dynamic model

    y_i = alpha * sum_j w_ij y_j + X_i^T beta(s_i) + eps_i.

Pipeline of :func:`estimate`:

1. smoother at bandwidth ``h``; ``alpha_hat`` maximises the concentrated
   log-likelihood; ``sigma2_hat`` is the smoother residual variance at
   ``alpha_hat`` (taken from this stage, never recomputed);
2. local-linear surfaces at the larger bandwidth ``h1`` applied to
   ``(I - alpha_hat W) y``;
3. coefficients flagged constant are replaced by the average of their surface;
4. residuals, log-likelihood and information criteria from the final fit.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .criteria import aic, bic, effective_params
from .errors import DataError, NumericalError
from .kernels import EPANECHNIKOV, KernelSpec, get_kernel
from .locallinear import (
    SmootherCache,
    SpatialDataset,
    build_smoother_cache,
    local_level_maps,
)
from .weights import DENSE_LIMIT, WeightMatrix, alpha_interval

__all__ = [
    "BandwidthPolicy",
    "ModelSpec",
    "FitResult",
    "BoundaryWarning",
    "log_det",
    "concentrated_loglik",
    "maximize_alpha",
    "estimate",
    "standard_errors",
    "hat_matrix",
    "DEFAULT_H1_RATIO",
]

log = logging.getLogger(__name__)

DEFAULT_H1_RATIO = 1.5
GRID_POINTS = 2001
GOLDEN_TOL = 1e-8


class BoundaryWarning(UserWarning):
    """The profile likelihood peaked at an end of the admissible alpha interval."""


@dataclass(frozen=True)
class BandwidthPolicy:
    """Bandwidths for the profile stage (``h``), the surface stage (``h1``) and selection.

    Each value is absolute unless the matching ``*_frac`` flag is set, in which
    case it is a fraction of the dataset's location range (the larger axis
    span).  ``h1`` defaults to ``1.5 h``.  ``selection_h`` defaults to
    ``0.2`` (AIC) or ``0.3`` (BIC) times the location range.
    """

    h: float
    h1: float | None = None
    selection_h: float | None = None
    h_frac: bool = False
    h1_frac: bool = False
    selection_frac: bool = False

    def _abs(self, value, frac, scale):
        return float(value) * scale if frac else float(value)

    def resolve(self, data: SpatialDataset | float) -> "ResolvedBandwidths":
        scale = data if isinstance(data, (int, float)) else data.location_range
        h = self._abs(self.h, self.h_frac, scale)
        h1 = DEFAULT_H1_RATIO * h if self.h1 is None else self._abs(self.h1, self.h1_frac, scale)
        if not h > 0:
            raise DataError(f"profile bandwidth must be positive, got h={h}")
        if not h1 > h:
            raise DataError(f"surface bandwidth must exceed the profile bandwidth: h1={h1} <= h={h}")
        sel = None
        if self.selection_h is not None:
            sel = self._abs(self.selection_h, self.selection_frac, scale)
            if not sel > 0:
                raise DataError(f"selection bandwidth must be positive, got {sel}")
        return ResolvedBandwidths(h=h, h1=h1, selection_h=sel, scale=float(scale))


@dataclass(frozen=True)
class ResolvedBandwidths:
    h: float
    h1: float
    selection_h: float | None
    scale: float

    def for_selection(self, criterion: str) -> float:
        if self.selection_h is not None:
            return self.selection_h
        return (0.2 if criterion.lower() == "aic" else 0.3) * self.scale


@dataclass(frozen=True, order=True)
class ModelSpec:
    """Which coefficients are constant; 1-based indices as in ``{1, 5}``."""

    constant: tuple = ()

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.constant))
        if len(set(idx)) != len(idx):
            raise DataError(f"duplicate constant indices in {self.constant}")
        if idx and idx[0] < 1:
            raise DataError(f"constant indices are 1-based, got {idx}")
        object.__setattr__(self, "constant", idx)

    @classmethod
    def all_constant(cls, p: int) -> "ModelSpec":
        return cls(tuple(range(1, p + 1)))

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        """Parse ``"3,5"``, ``"{3, 5}"`` or ``""``/``"{}"``."""
        body = text.strip().strip("{}").strip()
        if not body:
            return cls(())
        return cls(tuple(int(t) for t in body.replace(" ", "").split(",") if t))

    def validate(self, p: int) -> "ModelSpec":
        if self.constant and self.constant[-1] > p:
            raise DataError(f"constant index {self.constant[-1]} out of range for p={p}")
        return self

    @property
    def q(self) -> int:
        return len(self.constant)

    @property
    def zero_based(self) -> list[int]:
        return [i - 1 for i in self.constant]

    def without(self, j: int) -> "ModelSpec":
        return ModelSpec(tuple(i for i in self.constant if i != j))

    def __str__(self):
        return "{" + ", ".join(str(i) for i in self.constant) + "}"


@dataclass
class FitResult:
    """Estimates and diagnostics of one fitted model.

    ``beta_surface[i, j]`` is the estimate of ``beta_{j+1}(s_i)``; columns of
    constant coefficients hold their averaged value.  ``sigma2_hat`` comes
    from the profile stage at bandwidth ``h`` while ``residuals`` are
    ``A_hat y - m_hat`` from the final surfaces.
    """

    alpha_hat: float
    sigma2_hat: float
    beta_surface: np.ndarray
    beta_const: dict
    loglik: float
    n_effective_params: float
    aic: float
    bic: float
    residuals: np.ndarray
    log_det: float
    locations: np.ndarray
    h: float
    h1: float
    kernel: str = "epanechnikov"
    constant_indices: tuple = ()
    covariate_names: tuple = ()
    alpha_interval: tuple = (-1.0, 1.0)
    alpha_fixed: bool = False
    se_method: str = "none"
    se_alpha: float | None = None
    se_sigma2: float | None = None
    beta_se_surface: np.ndarray | None = None
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.residuals.shape[0])

    @property
    def p(self) -> int:
        return int(self.beta_surface.shape[1])

    @property
    def rss(self) -> float:
        return float(self.residuals @ self.residuals)

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.constant_indices)


def log_det(alpha, W: WeightMatrix, method: str = "auto"):
    """``log |det(I - alpha W)|``, vectorised over ``alpha``.

    ``method="eig"`` sums ``log|1 - alpha lambda_i|`` over the cached complex
    spectrum; ``"lu"`` factorises ``I - alpha W`` for each alpha.  ``"auto"``
    uses the spectrum up to ``n = 4096``.
    """
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if method == "auto":
        method = "eig" if W.n <= DENSE_LIMIT else "lu"
    if method == "eig":
        lam = W.spectrum
        re = 1.0 - a[:, None] * lam.real[None, :]
        im = a[:, None] * lam.imag[None, :]
        out = 0.5 * np.log(re * re + im * im).sum(axis=1)
    elif method == "lu":
        eye = np.eye(W.n)
        out = np.empty_like(a)
        for k, ak in enumerate(a):
            lu, _ = linalg.lu_factor(eye - ak * W.entries, check_finite=False)
            out[k] = np.sum(np.log(np.abs(np.diag(lu))))
    else:
        raise ValueError(f"unknown log-determinant method {method!r}")
    return float(out[0]) if np.ndim(alpha) == 0 else out


def concentrated_loglik(alpha, cache: SmootherCache, W: WeightMatrix, method: str = "auto"):
    """``-(n/2) log sigma_tilde^2(alpha) + log|I - alpha W|``; vectorised over ``alpha``."""
    s2 = np.asarray(cache.sigma2(alpha), dtype=float)
    if np.any(s2 <= 0) or not np.all(np.isfinite(s2)):
        raise NumericalError(
            "profile: residual variance sigma_tilde^2(alpha) is not positive; "
            "the smoother cache is inconsistent"
        )
    return -0.5 * cache.n * np.log(s2) + log_det(alpha, W, method)


def maximize_alpha(
    cache: SmootherCache,
    W: WeightMatrix,
    grid_points: int = GRID_POINTS,
    interval=None,
    return_info: bool = False,
):
    """Grid search over the admissible interval followed by golden-section refinement.

    Returns the maximiser, or ``(alpha, at_boundary)`` with
    ``return_info=True``.  A boundary maximum also raises a
    :class:`BoundaryWarning`.
    """
    lo, hi = alpha_interval(W) if interval is None else interval
    if not lo < hi:
        raise NumericalError(f"profile: empty admissible alpha interval ({lo}, {hi})")
    grid = np.linspace(lo, hi, int(grid_points))
    values = concentrated_loglik(grid, cache, W)
    k = int(np.argmax(values))

    def f(a):
        return float(concentrated_loglik(a, cache, W))

    at_boundary = k == 0 or k == grid.size - 1
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid.size - 1)]
    best = _golden_max(f, a, b, GOLDEN_TOL)
    if f(best) < values[k]:
        best = float(grid[k])
    if at_boundary:
        warnings.warn(
            f"profile likelihood maximised at the edge of the admissible interval "
            f"({lo:.4g}, {hi:.4g}); alpha_hat={best:.6g}. The weights may be misspecified.",
            BoundaryWarning,
            stacklevel=2,
        )
    return (best, at_boundary) if return_info else best


def _golden_max(f, a, b, width):
    """Golden-section search for a maximum of ``f`` on ``[a, b]`` down to ``width``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > width:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return float(0.5 * (a + b))


def hat_matrix(X) -> np.ndarray:
    """Projection onto the column space of ``X``; the smoother of an all-constant model."""
    Q, _ = np.linalg.qr(X)
    return Q @ Q.T


def _ols(X, v) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(X, v, rcond=None)
    return coef


def estimate(
    data: SpatialDataset,
    W: WeightMatrix,
    bw: BandwidthPolicy,
    spec: ModelSpec | None = None,
    kernel: KernelSpec | str = EPANECHNIKOV,
    fixed_alpha: float | None = None,
    se: str = "none",
    grid_points: int = GRID_POINTS,
    cache: SmootherCache | None = None,
) -> FitResult:
    """Fit the model by profile likelihood.

    Parameters
    ----------
    data : SpatialDataset
    W : WeightMatrix
    bw : BandwidthPolicy
        ``h`` for the profile stage, ``h1`` for the surfaces.
    spec : ModelSpec, optional
        Constant coefficients; default all functional.  When every
        coefficient is constant the model is parametric and the smoother is the
        least-squares hat matrix of ``X`` at both stages.
    kernel : KernelSpec or str
    fixed_alpha : float, optional
        Skip the profile search and use this value.
    se : {"none", "normal", "sandwich"}
        Plug-in standard errors to attach.
    cache : SmootherCache, optional
        Pre-built profile-stage cache at the resolved ``h``.

    Returns
    -------
    FitResult
    """
    kernel = get_kernel(kernel)
    spec = (spec or ModelSpec()).validate(data.p)
    if W.n != data.n:
        raise DataError(f"weight matrix is {W.n}x{W.n} but the dataset has n={data.n}")
    rb = bw.resolve(data)
    parametric = spec.q == data.p
    interval = alpha_interval(W)
    notes = []

    if cache is None:
        if parametric:
            cache = build_smoother_cache(data, W, rb.h, kernel, S=hat_matrix(data.X))
        else:
            cache = build_smoother_cache(data, W, rb.h, kernel)

    if fixed_alpha is None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", BoundaryWarning)
            alpha_hat = maximize_alpha(cache, W, grid_points=grid_points, interval=interval)
        for w in caught:
            notes.append(str(w.message))
            log.warning("%s", w.message)
    else:
        alpha_hat = float(fixed_alpha)
        if not interval[0] < alpha_hat < interval[1]:
            raise DataError(f"fixed alpha {alpha_hat} outside admissible interval {interval}")
    sigma2_hat = float(cache.sigma2(alpha_hat))
    if not sigma2_hat > 0:
        raise NumericalError("profile: estimated variance is not positive")

    Ay = data.y - alpha_hat * cache.Wy
    if parametric:
        coef = _ols(data.X, Ay)
        surface = np.tile(coef, (data.n, 1))
    else:
        levels = local_level_maps(data, rb.h1, kernel)
        surface = np.einsum("ijk,k->ij", levels, Ay)
        for j in spec.zero_based:
            surface[:, j] = surface[:, j].mean()
    beta_const = {j + 1: float(surface[0, j]) for j in spec.zero_based}
    m_hat = np.einsum("ij,ij->i", data.X, surface)
    resid = Ay - m_hat

    ld = log_det(alpha_hat, W)
    n = data.n
    rss = float(resid @ resid)
    loglik = -0.5 * n * math.log(2 * math.pi) - 0.5 * n * math.log(sigma2_hat) + ld - rss / (2 * sigma2_hat)
    K = effective_params(data.p, spec.q, kernel, rb.h1)

    fit = FitResult(
        alpha_hat=float(alpha_hat),
        sigma2_hat=sigma2_hat,
        beta_surface=surface,
        beta_const=beta_const,
        loglik=float(loglik),
        n_effective_params=float(K),
        aic=0.0,
        bic=0.0,
        residuals=resid,
        log_det=float(ld),
        locations=np.array(data.locations),
        h=rb.h,
        h1=rb.h1,
        kernel=kernel.name,
        constant_indices=spec.constant,
        covariate_names=tuple(data.covariate_names),
        alpha_interval=tuple(float(v) for v in interval),
        alpha_fixed=fixed_alpha is not None,
        warnings=notes,
    )
    fit.aic = aic(fit, K)
    fit.bic = bic(fit, K)
    if se != "none":
        fit = standard_errors(fit, data, W, assume_normal=(se == "normal"), cache=cache)
    return fit


def _kernel_density(locations, targets, h, kernel: KernelSpec) -> np.ndarray:
    """Planar kernel density estimate ``(1/(n kappa0)) sum_k K_h(||s_k - s||)``."""
    from scipy.spatial.distance import cdist

    d = cdist(np.asarray(targets), np.asarray(locations))
    Kh = kernel.profile(d / h) / (h * h)
    return Kh.mean(axis=1) / kernel.constants.kappa0


def standard_errors(
    fit: FitResult,
    data: SpatialDataset,
    W: WeightMatrix,
    assume_normal: bool = True,
    cache: SmootherCache | None = None,
) -> FitResult:
    """Attach plug-in standard errors for ``alpha_hat``, ``sigma2_hat`` and the surfaces.

    The information matrix uses ``G = W A_hat^{-1}``, ``pi_1 = tr((G+G^T)G)/n``,
    ``pi_2 = tr(G)/n`` and ``lambda_1 = ||(I - S) G m_hat||^2 / n`` with ``S``
    the profile-stage smoother.  Without normality the sandwich
    ``Omega^-1 + Omega^-1 Sigma Omega^-1`` is used, with third and fourth
    moments from the profile-stage residuals ``(I - S) A_hat y``.

    Functional coefficients get the asymptotic local-linear variance
    ``nu0 sigma^2 [Psi^-1]_jj / (kappa0^2 n h1^2 f(s))``.  Averaged constants
    get the exact variance of their linear estimator given ``alpha``.
    """
    kernel = get_kernel(fit.kernel)
    n = data.n
    s2 = fit.sigma2_hat
    spec = fit.spec
    if cache is None:
        S = hat_matrix(data.X) if spec.q == data.p else build_smoother_cache(data, W, fit.h, kernel).S
    else:
        S = cache.S
    A = np.eye(n) - fit.alpha_hat * W.entries
    try:
        lu = linalg.lu_factor(A)
        G = W.entries @ linalg.lu_solve(lu, np.eye(n))
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"profile: I - alpha W singular at alpha={fit.alpha_hat}") from exc
    m_hat = np.einsum("ij,ij->i", data.X, fit.beta_surface)
    Gm = G @ m_hat
    Rm = Gm - S @ Gm
    pi1 = float(np.trace((G + G.T) @ G)) / n
    pi2 = float(np.trace(G)) / n
    lam1 = float(Rm @ Rm) / n
    omega = np.array([[lam1 / s2 + pi1, pi2 / s2], [pi2 / s2, 1.0 / (2 * s2 * s2)]])

    notes = list(fit.warnings)
    if assume_normal:
        sigma_m = np.zeros((2, 2))
    else:
        # profile-stage residuals, so that mean(e^2) is exactly sigma2_hat
        Ay = data.y - fit.alpha_hat * (W @ data.y)
        e = Ay - S @ Ay
        mu3 = float(np.mean(e**3))
        mu4 = float(np.mean(e**4))
        gdiag = np.diag(G)
        pi3 = float(gdiag @ gdiag) / n
        lam2 = float(Rm @ gdiag) / n
        lam3 = float(Rm.sum()) / n
        k4 = mu4 - 3 * s2 * s2
        off = mu3 / (2 * s2**3) * lam3 + k4 / (2 * s2**3) * pi2
        sigma_m = np.array(
            [
                [k4 / s2**2 * pi3 + 2 * mu3 / s2**2 * lam2, off],
                [off, k4 / (4 * s2**4)],
            ]
        )

    se_alpha = None
    if omega[0, 0] <= 0 or np.linalg.det(omega) <= 1e-12 * omega[0, 0] * omega[1, 1]:
        # alpha not identified (e.g. W = 0): only the variance block is usable
        notes.append("information matrix singular in alpha; se_alpha unavailable")
        v22 = 1.0 / omega[1, 1]
        if not assume_normal:
            v22 += v22 * sigma_m[1, 1] * v22
        se_sigma2 = math.sqrt(v22 / n)
    else:
        inv = np.linalg.inv(omega)
        cov = inv + inv @ sigma_m @ inv
        se_alpha = math.sqrt(max(cov[0, 0], 0.0) / n)
        se_sigma2 = math.sqrt(max(cov[1, 1], 0.0) / n)

    c = kernel.constants
    psi_inv = np.linalg.inv(data.X.T @ data.X / n)
    f_hat = _kernel_density(data.locations, data.locations, fit.h1, kernel)
    with np.errstate(divide="ignore"):
        var_surface = (c.nu0 / c.kappa0**2) * s2 * np.diag(psi_inv)[None, :] / (n * fit.h1**2 * f_hat[:, None])
    beta_se = np.sqrt(var_surface)
    if spec.q:
        if spec.q == data.p:
            cov_b = s2 * np.linalg.inv(data.X.T @ data.X)
            for j in spec.zero_based:
                beta_se[:, j] = math.sqrt(cov_b[j, j])
        else:
            levels = local_level_maps(data, fit.h1, kernel)
            for j in spec.zero_based:
                row = levels[:, j, :].mean(axis=0)
                beta_se[:, j] = math.sqrt(s2 * float(row @ row))
    return replace(
        fit,
        se_method="normal" if assume_normal else "sandwich",
        se_alpha=se_alpha,
        se_sigma2=se_sigma2,
        beta_se_surface=beta_se,
        warnings=notes,
    )
