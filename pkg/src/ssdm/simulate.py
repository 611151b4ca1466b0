"""Data-generating processes and the Monte Carlo harness.

Replication ``r`` of a study draws from its own Philox stream keyed by
``(seed, table, n, r)``, so results do not depend on execution order or on
the number of worker processes.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DataError, NumericalError, SSDMError
from .kernels import EPANECHNIKOV, get_kernel
from .locallinear import SpatialDataset
from .profile import BandwidthPolicy, FitResult, ModelSpec, estimate
from .selection import backward_eliminate, build_selection_context, ctar_select
from .weights import alpha_interval, build_exp_decay_weights

__all__ = [
    "BetaFunction",
    "DgpConfig",
    "MonteCarloReport",
    "example1",
    "example2",
    "replication_rng",
    "generate",
    "mise",
    "run_table1",
    "run_table2",
    "TABLE2_MODELS",
    "MAX_FAILURE_RATE",
]

log = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.05
TABLE2_MODELS = ((5,), (1, 5), (4, 5), (1, 4, 5), (1, 2, 4, 5), (1, 2, 3, 4, 5))


@dataclass(frozen=True)
class BetaFunction:
    """A named coefficient surface on the unit square, a function of ``r = ||s||^2``."""

    kind: str
    value: float = 1.0

    def __call__(self, locations) -> np.ndarray:
        s = np.asarray(locations, dtype=float)
        r = np.einsum("ij,ij->i", s, s)
        if self.kind == "sin":
            return np.sin(math.pi * r)
        if self.kind == "cos":
            return np.cos(math.pi * r)
        if self.kind == "exp":
            return np.exp(r)
        if self.kind == "sin2":
            return np.sin(math.pi * r) ** 2
        if self.kind == "const":
            return np.full(s.shape[0], float(self.value))
        raise ValueError(f"unknown coefficient function {self.kind!r}")

    @property
    def label(self) -> str:
        names = {
            "sin": "sin(pi|s|^2)",
            "cos": "cos(pi|s|^2)",
            "exp": "exp(|s|^2)",
            "sin2": "sin^2(pi|s|^2)",
        }
        return names.get(self.kind, f"const({self.value:g})")


@dataclass(frozen=True)
class DgpConfig:
    n: int
    alpha: float
    sigma2: float
    beta_functions: tuple
    seed: int = 0
    table: int = 0
    rep: int = 0

    @property
    def p(self) -> int:
        return len(self.beta_functions)


def example1(n: int, seed: int = 0, rep: int = 0) -> DgpConfig:
    return DgpConfig(
        n=n,
        alpha=0.5,
        sigma2=1.0,
        beta_functions=(BetaFunction("sin"), BetaFunction("cos"), BetaFunction("exp")),
        seed=seed,
        table=1,
        rep=rep,
    )


def example2(n: int, seed: int = 0, rep: int = 0) -> DgpConfig:
    return DgpConfig(
        n=n,
        alpha=0.5,
        sigma2=1.0,
        beta_functions=(
            BetaFunction("sin"),
            BetaFunction("cos"),
            BetaFunction("exp"),
            BetaFunction("sin2"),
            BetaFunction("const", 1.0),
        ),
        seed=seed,
        table=2,
        rep=rep,
    )


def replication_rng(seed: int, table: int, n: int, rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(table), int(n), int(rep)))
    return np.random.Generator(np.random.Philox(ss))


def generate(config: DgpConfig, rng: np.random.Generator | None = None):
    """Draw one dataset.

    Locations are uniform on the unit square, covariates standard normal,
    errors ``N(0, sigma2)``; ``y`` solves ``(I - alpha W) y = m + eps``.

    Returns
    -------
    data : SpatialDataset
    W : WeightMatrix
    beta_true : (n, p) ndarray
    eps : (n,) ndarray
    """
    if config.sigma2 <= 0:
        raise DataError("sigma2 must be positive")
    if rng is None:
        rng = replication_rng(config.seed, config.table, config.n, config.rep)
    n, p = config.n, config.p
    s = rng.uniform(size=(n, 2))
    X = rng.standard_normal((n, p))
    eps = rng.standard_normal(n) * math.sqrt(config.sigma2)
    W = build_exp_decay_weights(s)
    lo, hi = alpha_interval(W)
    if not lo < config.alpha < hi:
        raise DataError(f"alpha={config.alpha} outside admissible interval ({lo}, {hi})")
    beta = np.column_stack([f(s) for f in config.beta_functions])
    m = np.einsum("ij,ij->i", X, beta)
    A = np.eye(n) - config.alpha * W.entries
    try:
        y = linalg.solve(A, m + eps)
    except linalg.LinAlgError as exc:
        raise DataError(f"I - alpha W is singular for alpha={config.alpha}") from exc
    return SpatialDataset(s, X, y), W, beta, eps


def mise(estimated, truth) -> np.ndarray:
    """Per-column ``(1/n) sum_i (b_j(s_i) - beta_j(s_i))^2``."""
    d = np.asarray(estimated, dtype=float) - np.asarray(truth, dtype=float)
    return np.mean(d * d, axis=0)


@dataclass
class MonteCarloReport:
    """Aggregated results for one sample size (and criterion/algorithm, for selection)."""

    n: int
    reps: int
    failures: int = 0
    mse_alpha: float | None = None
    mse_sigma2: float | None = None
    mise_beta: list | None = None
    selection_counts: dict | None = None
    criterion: str | None = None
    algorithm: str | None = None
    bandwidth: float | None = None
    median_rep: int | None = None
    median_run: FitResult | None = None
    median_truth: np.ndarray | None = field(default=None, repr=False)
    records: list = field(default_factory=list, repr=False)

    @property
    def ratios(self) -> dict:
        done = self.reps - self.failures
        return {k: v / done for k, v in (self.selection_counts or {}).items()}

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "reps": self.reps,
            "failures": self.failures,
        }
        if self.selection_counts is None:
            out.update(
                mse_alpha=self.mse_alpha,
                mse_sigma2=self.mse_sigma2,
                mise_beta=self.mise_beta,
                median_rep=self.median_rep,
            )
            if self.median_run is not None:
                out["median_alpha_hat"] = self.median_run.alpha_hat
                out["median_sigma2_hat"] = self.median_run.sigma2_hat
            se = [r["se_alpha"] for r in self.records if r.get("se_alpha") is not None]
            if se:
                out["mean_se_alpha"] = float(np.mean(se))
                out["sd_alpha_hat"] = float(np.std([r["alpha_hat"] for r in self.records], ddof=1))
        else:
            out.update(
                criterion=self.criterion,
                algorithm=self.algorithm,
                bandwidth=self.bandwidth,
                counts=dict(self.selection_counts),
                ratios=self.ratios,
            )
        out["records"] = self.records
        return out


def _check_failures(n, reps, failures):
    if failures and failures >= MAX_FAILURE_RATE * reps:
        raise NumericalError(
            f"simulate: {failures} of {reps} replications failed at n={n} "
            f"(must stay below {MAX_FAILURE_RATE:.0%})"
        )


def _map(fn, tasks, jobs):
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def _table1_rep(task):
    n, rep, seed, bw, kernel, se = task
    cfg = example1(n, seed, rep)
    data, W, beta, _ = generate(cfg)
    try:
        fit = estimate(data, W, bw, ModelSpec(), kernel, se=se)
    except SSDMError as exc:
        return {"rep": rep, "error": str(exc)}
    rec = {
        "rep": rep,
        "alpha_hat": fit.alpha_hat,
        "sigma2_hat": fit.sigma2_hat,
        "sq_err_alpha": (fit.alpha_hat - cfg.alpha) ** 2,
        "sq_err_sigma2": (fit.sigma2_hat - cfg.sigma2) ** 2,
        "ise_beta": [float(v) for v in mise(fit.beta_surface, beta)],
    }
    if se != "none":
        rec["se_alpha"] = fit.se_alpha
    return rec


def run_table1(
    n_list,
    reps: int,
    bw: BandwidthPolicy | None = None,
    seed: int = 0,
    kernel=EPANECHNIKOV,
    jobs: int = 1,
    se: str = "none",
) -> list[MonteCarloReport]:
    """Estimation study on the three-coefficient DGP, one report per sample size.

    Each replication fits the fully functional model and records squared
    errors of ``alpha_hat`` and ``sigma2_hat`` and the in-sample integrated
    squared error of each surface.  The median-performance replication (median
    of the summed error metrics) is refitted and attached.
    """
    if reps < 2:
        raise DataError("need at least 2 replications")
    bw = bw or BandwidthPolicy(h=0.4, h1=0.6)
    kernel = get_kernel(kernel)
    reports = []
    for n in n_list:
        tasks = [(int(n), r, int(seed), bw, kernel.name, se) for r in range(reps)]
        recs = _map(_table1_rep, tasks, jobs)
        ok = [r for r in recs if "error" not in r]
        failures = len(recs) - len(ok)
        for r in recs:
            if "error" in r:
                log.warning("n=%d rep=%d failed: %s", n, r["rep"], r["error"])
        _check_failures(n, reps, failures)
        totals = np.array([r["sq_err_alpha"] + r["sq_err_sigma2"] + sum(r["ise_beta"]) for r in ok])
        order = np.argsort(totals, kind="stable")
        med = ok[int(order[(len(ok) - 1) // 2])]["rep"]
        cfg = example1(int(n), seed, med)
        data, W, beta, _ = generate(cfg)
        median_fit = estimate(data, W, bw, ModelSpec(), kernel)
        reports.append(
            MonteCarloReport(
                n=int(n),
                reps=reps,
                failures=failures,
                mse_alpha=float(np.mean([r["sq_err_alpha"] for r in ok])),
                mse_sigma2=float(np.mean([r["sq_err_sigma2"] for r in ok])),
                mise_beta=[float(v) for v in np.mean([r["ise_beta"] for r in ok], axis=0)],
                median_rep=int(med),
                median_run=median_fit,
                median_truth=beta,
                records=recs,
            )
        )
    return reports


def _table2_rep(task):
    n, rep, seed, criteria, algorithms, sel_h, kernel, strict = task
    cfg = example2(n, seed, rep)
    data, W, _, _ = generate(cfg)
    out = {"rep": rep, "chosen": {}}
    for crit in criteria:
        h = sel_h.get(crit, 0.2 if crit == "aic" else 0.3)
        try:
            ctx = build_selection_context(data, W, h, kernel)
        except SSDMError as exc:
            for alg in algorithms:
                out["chosen"][f"{crit}/{alg}"] = {"error": str(exc)}
            continue
        for alg in algorithms:
            search = backward_eliminate if alg == "backward" else ctar_select
            res = search(data, W, h, kernel, crit, strict=strict, context=ctx)
            out["chosen"][f"{crit}/{alg}"] = list(res.chosen.constant)
    return out


def _bucket(model) -> str:
    t = tuple(model)
    return str(ModelSpec(t)) if t in TABLE2_MODELS else "other"


def run_table2(
    n_list,
    reps: int,
    criteria=("aic", "bic"),
    algorithms=("backward", "ctar"),
    seed: int = 0,
    selection_h: dict | None = None,
    kernel=EPANECHNIKOV,
    jobs: int = 1,
    strict: bool = False,
) -> list[MonteCarloReport]:
    """Selection study on the five-coefficient DGP (true model ``{5}``).

    Every replication dataset is shared by all requested criterion/algorithm
    pairs.  Returns one report per ``(n, criterion, algorithm)`` with pick
    counts over the tabulated models plus an ``"other"`` bucket.
    """
    if reps < 2:
        raise DataError("need at least 2 replications")
    criteria = tuple(c.lower() for c in criteria)
    algorithms = tuple(a.lower() for a in algorithms)
    sel_h = {"aic": 0.2, "bic": 0.3}
    sel_h.update(selection_h or {})
    kernel = get_kernel(kernel)
    reports = []
    for n in n_list:
        tasks = [(int(n), r, int(seed), criteria, algorithms, sel_h, kernel.name, strict) for r in range(reps)]
        recs = _map(_table2_rep, tasks, jobs)
        for crit in criteria:
            for alg in algorithms:
                key = f"{crit}/{alg}"
                counts = {str(ModelSpec(m)): 0 for m in TABLE2_MODELS}
                counts["other"] = 0
                failures = 0
                rows = []
                for r in recs:
                    chosen = r["chosen"][key]
                    if isinstance(chosen, dict):
                        failures += 1
                        rows.append({"rep": r["rep"], "error": chosen["error"]})
                        continue
                    counts[_bucket(chosen)] += 1
                    rows.append({"rep": r["rep"], "chosen": chosen})
                _check_failures(n, reps, failures)
                reports.append(
                    MonteCarloReport(
                        n=int(n),
                        reps=reps,
                        failures=failures,
                        selection_counts=counts,
                        criterion=crit,
                        algorithm=alg,
                        bandwidth=sel_h[crit],
                        records=rows,
                    )
                )
    return reports
