"""Spatial weight matrices, their spectra and the admissible range of alpha."""
from __future__ import annotations

import threading

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError, NumericalError

__all__ = [
    "WeightMatrix",
    "build_exp_decay_weights",
    "load_weights",
    "spectrum",
    "alpha_interval",
    "DENSE_LIMIT",
    "INTERVAL_SHRINK",
]

DENSE_LIMIT = 4096
INTERVAL_SHRINK = 1e-3
UNBOUNDED_CLAMP = 10.0


class WeightMatrix:
    """An immutable dense ``n x n`` spatial weight matrix.

    The eigenvalues are computed on first use and cached; the computation is
    guarded by a lock so concurrent readers trigger it at most once.

    Parameters
    ----------
    entries : (n, n) array_like
        Weights ``w_ij`` with zero diagonal.
    dense_ok : bool
        Allow ``n > DENSE_LIMIT``.
    """

    def __init__(self, entries, dense_ok: bool = False):
        w = np.array(entries, dtype=float, copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DataError(f"weight matrix must be square, got shape {w.shape}")
        n = w.shape[0]
        if n > DENSE_LIMIT and not dense_ok:
            raise DataError(
                f"n={n} exceeds the dense limit {DENSE_LIMIT}; pass dense_ok=True "
                "(--dense-ok) to proceed anyway"
            )
        if not np.all(np.isfinite(w)):
            raise DataError("weight matrix has non-finite entries")
        diag = np.abs(np.diag(w))
        if np.any(diag != 0.0):
            i = int(np.argmax(diag))
            raise DataError(f"weight matrix diagonal must be zero; w[{i},{i}]={w[i, i]}")
        w.setflags(write=False)
        self._w = w
        self.row_stochastic = bool(
            np.all(w >= 0.0) and np.allclose(w.sum(axis=1), 1.0, rtol=0.0, atol=1e-12)
        )
        self._eig = None
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self._w.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._w

    def __matmul__(self, other):
        return self._w @ other

    @property
    def spectrum(self) -> np.ndarray:
        return spectrum(self)

    @property
    def alpha_interval(self) -> tuple[float, float]:
        return alpha_interval(self)

    def log_det(self, alpha: float) -> float:
        """``log |det(I - alpha W)|`` from the cached spectrum."""
        return float(np.sum(np.log(np.abs(1.0 - alpha * self.spectrum))))

    def __repr__(self):
        return f"WeightMatrix(n={self.n}, row_stochastic={self.row_stochastic})"


def build_exp_decay_weights(locations, dense_ok: bool = False) -> WeightMatrix:
    """Row-normalised exponential-decay weights.

    ``w_ij = exp(-||s_i - s_j||) / sum_{k != i} exp(-||s_i - s_k||)`` for
    ``i != j`` and ``w_ii = 0``.  Coincident locations are allowed.
    """
    s = np.asarray(locations, dtype=float)
    if s.ndim != 2 or s.shape[1] != 2:
        raise DataError(f"locations must be an (n, 2) array, got shape {s.shape}")
    if s.shape[0] < 2:
        raise DataError("need at least two locations to normalise weights")
    if not np.all(np.isfinite(s)):
        raise DataError("locations contain non-finite values")
    if s.shape[0] > DENSE_LIMIT and not dense_ok:
        raise DataError(
            f"n={s.shape[0]} exceeds the dense limit {DENSE_LIMIT}; pass dense_ok=True"
        )
    e = np.exp(-cdist(s, s))
    np.fill_diagonal(e, 0.0)
    e /= e.sum(axis=1, keepdims=True)
    return WeightMatrix(e, dense_ok=dense_ok)


def load_weights(matrix, dense_ok: bool = False) -> WeightMatrix:
    """Validate a user-supplied matrix; row-stochasticity is recorded, not required."""
    return WeightMatrix(matrix, dense_ok=dense_ok)


def spectrum(W: WeightMatrix) -> np.ndarray:
    """Complex eigenvalues of ``W`` (cached on the instance)."""
    if W._eig is None:
        with W._lock:
            if W._eig is None:
                try:
                    ev = np.linalg.eigvals(W.entries).astype(complex)
                except np.linalg.LinAlgError as exc:
                    raise NumericalError(
                        f"weights: eigenvalue solver did not converge ({exc}); "
                        "use the LU log-determinant path instead"
                    ) from exc
                ev.setflags(write=False)
                W._eig = ev
    return W._eig


def alpha_interval(W: WeightMatrix, shrink: float = INTERVAL_SHRINK) -> tuple[float, float]:
    """Open interval of alpha on which ``I - alpha W`` is guaranteed nonsingular.

    Uses ``|alpha| < 1 / rho(W)`` shrunk by the factor ``1 - shrink``; a
    nonnegative row-stochastic matrix has ``rho = 1`` without an eigen-solve.
    A zero matrix gives ``(-10, 10)``.
    """
    if W.row_stochastic:
        rho = 1.0
    else:
        rho = float(np.max(np.abs(spectrum(W)))) if W.n else 0.0
    if rho <= 1.0 / UNBOUNDED_CLAMP:
        return (-UNBOUNDED_CLAMP, UNBOUNDED_CLAMP)
    bound = (1.0 - shrink) / rho
    return (-bound, bound)
