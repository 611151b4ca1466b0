"""Local-linear estimation of coefficient surfaces and the smoother machinery.

For a target location ``s`` the local design has rows
``(X_k, X_k (x) (s_k - s))`` weighted by ``K_h(||s_k - s||)``.  The level part
of the weighted least-squares solution is the local estimate of
``beta(s)``; stacking ``X_i^T`` times that level over ``s = s_i`` gives the
smoother matrix ``S`` that maps a working response to fitted values.

Internally the slope columns are divided by ``h`` so that the local Gram
matrix is well scaled whatever the units of the coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BandwidthTooSmall, DataError
from .kernels import EPANECHNIKOV, KernelSpec, get_kernel

__all__ = [
    "SpatialDataset",
    "LocalFit",
    "SmootherCache",
    "local_linear_fit",
    "local_level_maps",
    "smoother_matrix",
    "projection_quadratic",
    "build_smoother_cache",
    "min_feasible_bandwidth",
]

RIDGE = 1e-10
MAX_COND = 1e10
CHUNK_BYTES = 64 * 2**20


@dataclass(frozen=True)
class SpatialDataset:
    """Locations ``s_i`` (n x 2), covariates ``X`` (n x p) and response ``y`` (n)."""

    locations: np.ndarray
    X: np.ndarray
    y: np.ndarray
    covariate_names: tuple = ()

    def __post_init__(self):
        s = np.array(self.locations, dtype=float)
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = y.reshape(-1)
        if s.ndim != 2 or s.shape[1] != 2:
            raise DataError(f"locations must be (n, 2), got {s.shape}")
        n = s.shape[0]
        if X.shape[0] != n or y.shape[0] != n:
            raise DataError(
                f"row mismatch: locations {n}, X {X.shape[0]}, y {y.shape[0]}"
            )
        for name, arr in (("locations", s), ("X", X), ("y", y)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        p = X.shape[1]
        if n <= 3 * p:
            raise DataError(f"need n > 3p observations, got n={n}, p={p}")
        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise DataError(f"{len(names)} covariate names for p={p} columns")
        for arr in (s, X, y):
            arr.setflags(write=False)
        object.__setattr__(self, "locations", s)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def axis_spans(self) -> tuple[float, float]:
        span = np.ptp(self.locations, axis=0)
        return float(span[0]), float(span[1])

    @property
    def location_range(self) -> float:
        """Larger of the two coordinate spans; fraction-of-range bandwidths use this."""
        return max(self.axis_spans)

    def with_response(self, y) -> "SpatialDataset":
        return SpatialDataset(self.locations, self.X, y, self.covariate_names)

    def with_covariates(self, X, names=()) -> "SpatialDataset":
        return SpatialDataset(self.locations, X, self.y, names)


@dataclass(frozen=True)
class LocalFit:
    a: np.ndarray
    B: np.ndarray
    effective_weight_count: float


def min_feasible_bandwidth(locations, target, p: int, kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Smallest ``h`` such that ``3p`` points get nonzero weight at ``target``.

    Any bandwidth strictly larger than the returned value admits ``3p`` points.
    """
    d = np.sort(np.linalg.norm(np.asarray(locations) - np.asarray(target), axis=1))
    k = min(3 * p, d.size) - 1
    return float(d[k] / kernel.support)


def _chunk_size(n: int, p: int) -> int:
    per_target = n * 3 * p * 8 * 3
    return int(max(1, min(n, CHUNK_BYTES // max(per_target, 1))))


def _local_maps(locations, X, targets, h, kernel, target_index=None):
    """Solve the local weighted least-squares problems for a batch of targets.

    Returns ``C`` of shape ``(m, 3p, n)`` with ``C[t] = (Z^T W Z)^{-1} Z^T W`` in
    the h-scaled parametrisation (slope rows are ``h`` times the true slopes),
    and the kernel weights ``(m, n)``.
    """
    n, p = X.shape
    q = 3 * p
    diff = locations[None, :, :] - targets[:, None, :]
    dist = np.sqrt(np.einsum("mnk,mnk->mn", diff, diff))
    w = kernel.profile(dist / h) / (h * h)
    m = targets.shape[0]
    Z = np.empty((m, n, q))
    Z[:, :, :p] = X[None, :, :]
    scaled = diff / h
    Z[:, :, p:] = (X[None, :, :, None] * scaled[:, :, None, :]).reshape(m, n, 2 * p)
    Zw = Z * w[:, :, None]
    M = np.einsum("mnp,mnq->mpq", Zw, Z)
    # Jacobi equilibration: conditioning must not depend on covariate units
    diag = np.sqrt(np.einsum("mii->mi", M))
    empty = ~(diag > 0).all(axis=1)
    d = np.where(diag > 0, diag, 1.0)
    Ms = M / (d[:, :, None] * d[:, None, :])
    Ms = Ms + RIDGE * np.eye(q)

    support = np.count_nonzero(w > 0, axis=1)
    bad = (support < q) | empty
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(Ms)
    bad |= ~np.isfinite(cond) | (cond > MAX_COND)
    if np.any(bad):
        t = int(np.argmax(bad))
        idx = None if target_index is None else int(target_index[t])
        loc = tuple(float(v) for v in targets[t])
        min_h = min_feasible_bandwidth(locations, targets[t], p, kernel)
        where = f"row {idx} " if idx is not None else ""
        raise BandwidthTooSmall(
            f"locallinear: local design singular at {where}location "
            f"({loc[0]:.6g}, {loc[1]:.6g}) with h={h:.6g}: {int(support[t])} points "
            f"in window (need {q}), condition number {cond[t]:.3g}; "
            f"use h > {min_h:.6g} at minimum",
            index=idx,
            location=loc,
            min_h=min_h,
        )
    rhs = np.transpose(Zw, (0, 2, 1)) / d[:, :, None]
    C = np.linalg.solve(Ms, rhs) / d[:, :, None]
    return C, w


def _as_kernel(kernel):
    return get_kernel(kernel) if not isinstance(kernel, KernelSpec) else kernel


def local_linear_fit(data: SpatialDataset, ystar, s, h: float, kernel=EPANECHNIKOV) -> LocalFit:
    """Local-linear fit of ``ystar`` on ``X`` around the location ``s``.

    Returns the level ``a`` (estimate of ``beta(s)``), the slope matrix ``B``
    (``p x 2``, columns are the u- and v-derivatives) and the total kernel
    weight at ``s``.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    kernel = _as_kernel(kernel)
    ystar = np.asarray(ystar, dtype=float).reshape(-1)
    target = np.asarray(s, dtype=float).reshape(1, 2)
    C, w = _local_maps(data.locations, data.X, target, h, kernel)
    coef = C[0] @ ystar
    p = data.p
    a = coef[:p]
    B = coef[p:].reshape(p, 2) / h
    return LocalFit(a=a, B=B, effective_weight_count=float(w[0].sum()))


def local_level_maps(data: SpatialDataset, h: float, kernel=EPANECHNIKOV, targets=None) -> np.ndarray:
    """Linear maps from a working response to local levels.

    Returns ``L`` of shape ``(m, p, n)`` such that ``L[i] @ ystar`` is the
    local-linear estimate of ``beta`` at target ``i`` (the data locations by
    default).  Rows are computed in fixed-size chunks in index order, so the
    result does not depend on chunking.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    kernel = _as_kernel(kernel)
    locs = data.locations
    T = locs if targets is None else np.asarray(targets, dtype=float)
    p = data.p
    m = T.shape[0]
    out = np.empty((m, p, data.n))
    step = _chunk_size(data.n, p)
    for start in range(0, m, step):
        stop = min(m, start + step)
        C, _ = _local_maps(locs, data.X, T[start:stop], h, kernel, np.arange(start, stop))
        out[start:stop] = C[:, :p, :]
    return out


def smoother_matrix(data: SpatialDataset, h: float, kernel=EPANECHNIKOV, levels=None) -> np.ndarray:
    """The ``n x n`` smoother ``S`` with ``S @ v = (X_i^T beta_tilde(s_i; v))_i``."""
    if levels is None:
        levels = local_level_maps(data, h, kernel)
    return np.einsum("ij,ijk->ik", data.X, levels)


def projection_quadratic(S, W, y) -> tuple[float, float, float]:
    """Coefficients of ``n * sigma_tilde^2(alpha) = c0 - 2 alpha c1 + alpha^2 c2``.

    With ``r0 = (I - S) y`` and ``r1 = (I - S) W y``: ``c0 = r0.r0``,
    ``c1 = r0.r1``, ``c2 = r1.r1``.
    """
    y = np.asarray(y, dtype=float)
    Wy = W @ y
    r0 = y - S @ y
    r1 = Wy - S @ Wy
    return float(r0 @ r0), float(r0 @ r1), float(r1 @ r1)


@dataclass(frozen=True)
class SmootherCache:
    """Smoother at one bandwidth plus everything the profile likelihood needs."""

    S: np.ndarray
    c0: float
    c1: float
    c2: float
    h: float
    Wy: np.ndarray
    levels: np.ndarray = field(repr=False, default=None)
    kernel: KernelSpec = EPANECHNIKOV

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def P(self) -> np.ndarray:
        R = np.eye(self.n) - self.S
        return R.T @ R

    def rss(self, alpha) -> np.ndarray | float:
        """``n * sigma_tilde^2(alpha)``; vectorised over ``alpha``."""
        a = np.asarray(alpha, dtype=float)
        out = self.c0 - 2.0 * a * self.c1 + a * a * self.c2
        return float(out) if out.ndim == 0 else out

    def sigma2(self, alpha):
        return self.rss(alpha) / self.n


def build_smoother_cache(data: SpatialDataset, W, h: float, kernel=EPANECHNIKOV, S=None, levels=None) -> SmootherCache:
    """Build ``S`` at bandwidth ``h`` (or wrap a given operator) with its quadratic."""
    kernel = _as_kernel(kernel)
    if S is None:
        if levels is None:
            levels = local_level_maps(data, h, kernel)
        S = smoother_matrix(data, h, kernel, levels=levels)
    c0, c1, c2 = projection_quadratic(S, W, data.y)
    Wy = np.asarray(W @ data.y, dtype=float)
    S = np.asarray(S)
    S.setflags(write=False)
    return SmootherCache(S=S, c0=c0, c1=c1, c2=c2, h=float(h), Wy=Wy, levels=levels, kernel=kernel)
