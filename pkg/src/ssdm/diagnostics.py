"""Residual diagnostics: the residual series, normal Q-Q data, ACF and PACF.

Residuals are taken in dataset row order.  For spatial data the resulting
autocorrelations are a heuristic check only; the ordering is recorded in the
report metadata.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DataError

__all__ = ["DiagnosticsReport", "acf", "pacf", "normal_qq", "residual_diagnostics", "default_lags"]


def default_lags(n: int) -> int:
    return int(max(1, min(40, n // 4)))


def acf(x, nlags: int) -> np.ndarray:
    """Sample autocorrelations at lags ``0..nlags`` with the biased ``1/n`` denominator."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    if not 0 < nlags < n:
        raise ValueError(f"need 0 < nlags < n, got nlags={nlags}, n={n}")
    d = x - x.mean()
    c0 = d @ d
    if not c0 > 0:
        raise DataError("diagnostics: residuals have zero variance")
    full = np.correlate(d, d, mode="full")[n - 1 : n + nlags]
    return full / c0


def pacf(r) -> np.ndarray:
    """Partial autocorrelations at lags ``1..L`` via the Durbin-Levinson recursion.

    ``r`` holds autocorrelations at lags ``0..L`` with ``r[0] == 1``.
    """
    r = np.asarray(r, dtype=float)
    L = r.size - 1
    out = np.empty(L)
    phi = np.zeros(L + 1)
    v = 1.0
    for k in range(1, L + 1):
        num = r[k] - phi[1:k] @ r[k - 1 : 0 : -1]
        a = num / v if v > 0 else 0.0
        new = phi.copy()
        new[k] = a
        new[1:k] = phi[1:k] - a * phi[k - 1 : 0 : -1]
        phi = new
        v *= 1.0 - a * a
        out[k - 1] = a
    return out


def normal_qq(x) -> tuple[np.ndarray, np.ndarray]:
    """Theoretical N(0,1) quantiles at ``(i - 0.5)/n`` and the sorted standardized sample."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DataError("diagnostics: residuals have zero variance")
    z = np.sort((x - x.mean()) / sd)
    q = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return q, z


@dataclass
class DiagnosticsReport:
    residuals: np.ndarray
    qq_theoretical: np.ndarray
    qq_sample: np.ndarray
    acf: np.ndarray
    pacf: np.ndarray
    band: float
    lags: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "residuals": self.residuals.tolist(),
            "qq": {"theoretical": self.qq_theoretical.tolist(), "sample": self.qq_sample.tolist()},
            "acf": {"lags": list(range(1, self.lags + 1)), "values": self.acf.tolist(), "band": self.band},
            "pacf": {"lags": list(range(1, self.lags + 1)), "values": self.pacf.tolist(), "band": self.band},
            "metadata": dict(self.metadata),
        }


def residual_diagnostics(fit_or_residuals, L: int | None = None) -> DiagnosticsReport:
    """Diagnostics for a fit (anything with ``.residuals``) or a residual vector.

    ``acf`` and ``pacf`` hold lags ``1..L``; the band is ``1.96 / sqrt(n)``.
    """
    res = getattr(fit_or_residuals, "residuals", fit_or_residuals)
    if res is None:
        raise DataError("diagnostics: fit has no residuals")
    res = np.asarray(res, dtype=float).reshape(-1)
    n = res.size
    if n < 3:
        raise DataError(f"diagnostics: need at least 3 residuals, got {n}")
    if not np.all(np.isfinite(res)):
        raise DataError("diagnostics: residuals contain non-finite values")
    L = default_lags(n) if L is None else int(L)
    if not 0 < L < n:
        raise DataError(f"diagnostics: need 0 < L < n, got L={L}, n={n}")
    r = acf(res, L)
    q, z = normal_qq(res)
    return DiagnosticsReport(
        residuals=res,
        qq_theoretical=q,
        qq_sample=z,
        acf=r[1:],
        pacf=pacf(r),
        band=1.96 / np.sqrt(n),
        lags=L,
        metadata={
            "ordering": "dataset row order",
            "acf_denominator": "n (biased)",
            "qq_positions": "(i - 0.5) / n",
            "n": n,
        },
    )
