"""Reading datasets and weights, and writing fits and surfaces.

Fits are stored as JSON with a ``format_version`` field.  Non-finite floats
are encoded as the strings ``"inf"``, ``"-inf"`` and ``"nan"`` so the files
stay strict JSON.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError, FormatVersionError
from .locallinear import SpatialDataset
from .profile import FitResult

__all__ = [
    "FORMAT_VERSION",
    "DatasetSchema",
    "BOSTON_SCHEMA",
    "read_dataset",
    "read_weights",
    "fit_to_dict",
    "fit_from_dict",
    "write_fit",
    "read_fit",
    "write_surface_csv",
    "write_json",
    "to_jsonable",
]

FORMAT_VERSION = 1


@dataclass(frozen=True)
class DatasetSchema:
    """Column roles for a CSV dataset.

    ``covariates=None`` means every column other than the locations and the
    response, in file order.  Columns listed in ``standardize`` are centred and
    scaled to unit sample standard deviation after reading.
    """

    location: tuple = ("u", "v")
    response: str = "y"
    covariates: tuple | None = None
    standardize: tuple = ()

    def __post_init__(self):
        if len(self.location) != 2:
            raise DataError(f"schema needs exactly two location columns, got {self.location}")
        object.__setattr__(self, "location", tuple(self.location))
        if self.covariates is not None:
            object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "standardize", tuple(self.standardize))


BOSTON_SCHEMA = DatasetSchema(
    location=("LON", "LAT"),
    response="MEDV",
    covariates=("CRIM", "RM", "RAD", "TAX", "LSTAT"),
)


def _numeric_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    col = frame[name]
    values = pd.to_numeric(col, errors="coerce")
    bad = values.isna() & col.notna()
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        # +2: header line plus 1-based numbering
        raise DataError(
            f"io: non-numeric value {col.iloc[i]!r} in column {name!r} at row {i + 2}"
        )
    missing = values.isna().to_numpy()
    if missing.any():
        rows = [int(i) + 2 for i in np.flatnonzero(missing)[:10]]
        raise DataError(f"io: missing values in column {name!r} at rows {rows}")
    return values.to_numpy(dtype=float)


def read_dataset(path, schema: DatasetSchema | None = None) -> SpatialDataset:
    """Read a CSV file with a header row into a :class:`SpatialDataset`.

    Row numbers in error messages count the header as line 1.
    """
    schema = schema or DatasetSchema()
    frame = pd.read_csv(path, dtype=str, keep_default_na=True, skipinitialspace=True)
    frame.columns = [str(c).strip() for c in frame.columns]
    covs = schema.covariates
    if covs is None:
        taken = set(schema.location) | {schema.response}
        covs = tuple(c for c in frame.columns if c not in taken)
    needed = list(schema.location) + [schema.response] + list(covs)
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise DataError(f"io: column(s) {', '.join(map(repr, missing))} not found in {path}")
    if not covs:
        raise DataError(f"io: no covariate columns in {path}")
    unknown = [c for c in schema.standardize if c not in covs]
    if unknown:
        raise DataError(f"io: standardize names non-covariate column(s) {unknown}")
    locs = np.column_stack([_numeric_column(frame, c) for c in schema.location])
    y = _numeric_column(frame, schema.response)
    X = np.column_stack([_numeric_column(frame, c) for c in covs])
    for j, name in enumerate(covs):
        if name in schema.standardize:
            sd = X[:, j].std(ddof=1)
            if not sd > 0:
                raise DataError(f"io: cannot standardize constant column {name!r}")
            X[:, j] = (X[:, j] - X[:, j].mean()) / sd
    return SpatialDataset(locs, X, y, tuple(covs))


def read_weights(path, n: int | None = None) -> np.ndarray:
    """Read a dense weight matrix from a headerless CSV file."""
    W = np.loadtxt(path, delimiter=",", ndmin=2)
    if n is not None and W.shape != (n, n):
        raise DataError(f"io: weight matrix in {path} has shape {W.shape}, expected ({n}, {n})")
    return W


def _enc_float(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def to_jsonable(obj):
    """Convert numpy containers and non-finite floats into strict-JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _enc_float(obj)
    return obj


def _dec_float(x):
    if isinstance(x, str):
        return float(x)
    return None if x is None else float(x)


def _dec_array(x, ndim):
    if x is None:
        return None
    arr = np.array(x, dtype=object)
    out = np.vectorize(_dec_float, otypes=[float])(arr) if arr.size else np.asarray(x, dtype=float)
    return out.reshape((-1,) + out.shape[1:]) if ndim > 1 else out.reshape(-1)


_ARRAYS = {"beta_surface": 2, "residuals": 1, "locations": 2, "beta_se_surface": 2}
_FLOATS = ("alpha_hat", "sigma2_hat", "loglik", "n_effective_params", "aic", "bic", "log_det", "h", "h1", "se_alpha", "se_sigma2")


def fit_to_dict(fit: FitResult, config: dict | None = None) -> dict:
    body = {f.name: getattr(fit, f.name) for f in fields(fit)}
    body["beta_const"] = {str(k): v for k, v in fit.beta_const.items()}
    out = {"format_version": FORMAT_VERSION, "kind": "ssdm.FitResult", "fit": to_jsonable(body)}
    if config is not None:
        out["config"] = to_jsonable(config)
    return out


def fit_from_dict(doc: dict) -> FitResult:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"io: fit file has format_version {version!r}, this version reads {FORMAT_VERSION}"
        )
    body = dict(doc["fit"])
    for name, ndim in _ARRAYS.items():
        body[name] = _dec_array(body.get(name), ndim)
    for name in _FLOATS:
        body[name] = _dec_float(body.get(name))
    body["beta_const"] = {int(k): _dec_float(v) for k, v in body["beta_const"].items()}
    body["constant_indices"] = tuple(int(i) for i in body["constant_indices"])
    body["covariate_names"] = tuple(body["covariate_names"])
    body["alpha_interval"] = tuple(_dec_float(v) for v in body["alpha_interval"])
    body["alpha_fixed"] = bool(body["alpha_fixed"])
    body["warnings"] = list(body.get("warnings") or [])
    return FitResult(**body)


def write_json(doc: dict, path) -> None:
    text = json.dumps(to_jsonable(doc), indent=2, sort_keys=False, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_fit(fit: FitResult, path, config: dict | None = None) -> None:
    """Write ``fit`` (and optionally the run configuration) as versioned JSON."""
    write_json(fit_to_dict(fit, config), path)


def read_fit(path) -> FitResult:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return fit_from_dict(doc)


def write_surface_csv(fit: FitResult, path) -> None:
    """Write ``u, v, beta_1..beta_p`` (and ``se_1..se_p`` when available) per location."""
    cols = {"u": fit.locations[:, 0], "v": fit.locations[:, 1]}
    for j in range(fit.p):
        cols[f"beta_{j + 1}"] = fit.beta_surface[:, j]
    if fit.beta_se_surface is not None:
        for j in range(fit.p):
            cols[f"se_{j + 1}"] = fit.beta_se_surface[:, j]
    pd.DataFrame(cols).to_csv(path, index=False, float_format="%.17g")
