"""Command-line entry point ``ssdm`` with subcommands fit, select, simulate, diagnose.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import residual_diagnostics
from .errors import DataError, NumericalError, SSDMError
from .io import (
    BOSTON_SCHEMA,
    DatasetSchema,
    fit_to_dict,
    read_dataset,
    read_fit,
    read_weights,
    write_json,
    write_surface_csv,
)
from .kernels import get_kernel
from .profile import BandwidthPolicy, ModelSpec, estimate
from .selection import backward_eliminate, ctar_select
from .simulate import run_table1, run_table2
from .weights import build_exp_decay_weights, load_weights

__all__ = ["main", "build_parser", "RunConfig"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("ssdm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class RunConfig:
    """Fully resolved settings of one command, embedded in every output."""

    subcommand: str
    bandwidths: dict
    kernel: str
    seed: int | None
    jobs: int
    paths: dict
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _csv_list(text, conv=str):
    try:
        return [conv(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _common(parser):
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="stderr verbosity (default WARNING)")
    parser.add_argument("--kernel", default="epanechnikov",
                        choices=["epanechnikov", "quartic", "gaussian"],
                        help="kernel family (default epanechnikov)")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes for Monte Carlo runs (default: all cores)")
    parser.add_argument("--dense-ok", action="store_true",
                        help="allow dense weight matrices above n=4096")


def _data_args(parser):
    parser.add_argument("--data", required=True, help="CSV file with a header row")
    parser.add_argument("--weights", help="n x n weight matrix CSV without header "
                        "(default: exponential-decay weights from the locations)")
    parser.add_argument("--schema", choices=["default", "boston"], default="default",
                        help="column preset: default u,v,y; boston LON,LAT,MEDV with "
                        "CRIM,RM,RAD,TAX,LSTAT")
    parser.add_argument("--loc", type=_csv_list, help="two location columns, e.g. u,v")
    parser.add_argument("--response", help="response column")
    parser.add_argument("--covariates", type=_csv_list,
                        help="covariate columns in order (default: all remaining)")
    parser.add_argument("--standardize", type=_csv_list, default=[],
                        help="covariate columns to centre and scale")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ssdm", description="Semiparametric spatial dynamic model toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("fit", help="fit the model by profile likelihood")
    _data_args(p)
    p.add_argument("--h", type=_positive_float, required=True, help="profile-stage bandwidth")
    p.add_argument("--h1", type=_positive_float, help="surface-stage bandwidth (default 1.5 h)")
    p.add_argument("--h-frac", action="store_true", help="--h is a fraction of the location range")
    p.add_argument("--h1-frac", action="store_true", help="--h1 is a fraction of the location range")
    p.add_argument("--constant", default="", help="1-based constant coefficients, e.g. 3,5")
    p.add_argument("--se", choices=["none", "normal", "sandwich"], default="none",
                   help="standard errors (default none)")
    p.add_argument("--out", default="fit.json", help="fit JSON (default fit.json)")
    p.add_argument("--surface", help="optional CSV of u,v,beta_j[,se_j]")
    _common(p)

    p = sub.add_parser("select", help="identify constant coefficients")
    _data_args(p)
    p.add_argument("--criterion", choices=["aic", "bic"], default="bic")
    p.add_argument("--algorithm", choices=["backward", "ctar"], default="backward")
    p.add_argument("--sel-h", type=_positive_float,
                   help="selection bandwidth (default 0.2 for AIC, 0.3 for BIC, times the range)")
    p.add_argument("--sel-frac", action="store_true", help="--sel-h is a fraction of the location range")
    p.add_argument("--strict", action="store_true",
                   help="re-profile alpha and sigma^2 for every candidate model")
    p.add_argument("--out", default="selection.json", help="selection JSON (default selection.json)")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo studies on the two built-in designs")
    p.add_argument("--table", type=int, choices=[1, 2], required=True)
    p.add_argument("--n", type=lambda s: _csv_list(s, int), default=[400, 500, 600],
                   help="comma-separated sample sizes (default 400,500,600)")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--h", type=_positive_float, default=0.4, help="table 1 profile bandwidth")
    p.add_argument("--h1", type=_positive_float, default=0.6, help="table 1 surface bandwidth")
    p.add_argument("--se", choices=["none", "normal", "sandwich"], default="none",
                   help="table 1: also compute standard errors")
    p.add_argument("--criteria", type=_csv_list, default=["aic", "bic"], help="table 2 criteria")
    p.add_argument("--algorithms", type=_csv_list, default=["backward", "ctar"],
                   help="table 2 search algorithms")
    p.add_argument("--sel-h-aic", type=_positive_float, default=0.2)
    p.add_argument("--sel-h-bic", type=_positive_float, default=0.3)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", default="report.json", help="report JSON (default report.json)")
    p.add_argument("--surfaces-out", help="table 1: directory for median-run surface CSVs")
    _common(p)

    p = sub.add_parser("diagnose", help="residual diagnostics of a saved fit")
    p.add_argument("--fit", required=True, help="fit JSON written by 'ssdm fit'")
    p.add_argument("--data", help="dataset the fit came from (row count is checked)")
    p.add_argument("--schema", choices=["default", "boston"], default="default")
    p.add_argument("--lags", type=int, help="number of lags (default min(40, n/4))")
    p.add_argument("--out", default="diag.json", help="diagnostics JSON (default diag.json)")
    _common(p)
    return parser


def _schema(args) -> DatasetSchema:
    base = BOSTON_SCHEMA if args.schema == "boston" else DatasetSchema()
    loc = tuple(args.loc) if getattr(args, "loc", None) else base.location
    if len(loc) != 2:
        raise UsageError(f"ssdm: error: --loc needs two columns, got {loc}")
    return DatasetSchema(
        location=loc,
        response=getattr(args, "response", None) or base.response,
        covariates=tuple(args.covariates) if getattr(args, "covariates", None) else base.covariates,
        standardize=tuple(getattr(args, "standardize", None) or ()),
    )


def _load(args):
    data = read_dataset(args.data, _schema(args))
    if args.weights:
        W = load_weights(read_weights(args.weights, data.n), dense_ok=args.dense_ok)
    else:
        W = build_exp_decay_weights(data.locations, dense_ok=args.dense_ok)
    log.info("read %s: n=%d p=%d range=%.6g", args.data, data.n, data.p, data.location_range)
    return data, W


def _document(config: RunConfig, body: dict) -> dict:
    return {
        "format_version": 1,
        "config": config.to_dict(),
        **body,
        "metadata": {
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "version": __version__,
        },
    }


def _cmd_fit(args) -> None:
    data, W = _load(args)
    spec = ModelSpec.parse(args.constant).validate(data.p)
    bw = BandwidthPolicy(h=args.h, h1=args.h1, h_frac=args.h_frac, h1_frac=args.h1_frac)
    rb = bw.resolve(data)
    fit = estimate(data, W, bw, spec, args.kernel, se=args.se)
    config = RunConfig(
        subcommand="fit",
        bandwidths={"h": rb.h, "h1": rb.h1, "scale": rb.scale},
        kernel=args.kernel,
        seed=None,
        jobs=args.jobs,
        paths={"data": args.data, "weights": args.weights, "out": args.out, "surface": args.surface},
        options={"constant": list(spec.constant), "se": args.se, "schema": asdict(_schema(args))},
    )
    doc = fit_to_dict(fit, config.to_dict())
    write_json(_document(config, {k: v for k, v in doc.items() if k not in ("format_version", "config")}), args.out)
    if args.surface:
        write_surface_csv(fit, args.surface)
    for w in fit.warnings:
        log.warning("%s", w)


def _cmd_select(args) -> None:
    data, W = _load(args)
    if args.sel_h is None:
        h = (0.2 if args.criterion == "aic" else 0.3) * data.location_range
    else:
        h = args.sel_h * data.location_range if args.sel_frac else args.sel_h
    search = backward_eliminate if args.algorithm == "backward" else ctar_select
    res = search(data, W, h, args.kernel, args.criterion, strict=args.strict)
    config = RunConfig(
        subcommand="select",
        bandwidths={"selection_h": h, "scale": data.location_range},
        kernel=args.kernel,
        seed=None,
        jobs=args.jobs,
        paths={"data": args.data, "weights": args.weights, "out": args.out},
        options={"criterion": args.criterion, "algorithm": args.algorithm,
                 "strict": args.strict, "schema": asdict(_schema(args))},
    )
    write_json(_document(config, {"selection": res.to_dict()}), args.out)
    print(f"chosen constant set: {res.chosen}")


def _write_surfaces(report, directory: Path) -> None:
    fit, truth = report.median_run, report.median_truth
    if fit is None:
        return
    directory.mkdir(parents=True, exist_ok=True)
    cols = [fit.locations[:, 0], fit.locations[:, 1]]
    names = ["u", "v"]
    for j in range(fit.p):
        cols += [truth[:, j], fit.beta_surface[:, j]]
        names += [f"beta_{j + 1}", f"beta_hat_{j + 1}"]
    path = directory / f"table1_n{report.n}_median.csv"
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(names),
               comments="", fmt="%.17g")


def _cmd_simulate(args) -> None:
    if args.reps < 2:
        raise UsageError("ssdm simulate: error: --reps must be at least 2")
    jobs = max(1, args.jobs)
    if args.table == 1:
        bw = BandwidthPolicy(h=args.h, h1=args.h1)
        bw.resolve(1.0)
        reports = run_table1(args.n, args.reps, bw, args.seed, args.kernel, jobs, se=args.se)
        bands = {"h": args.h, "h1": args.h1}
        options = {"se": args.se}
    else:
        for c in args.criteria:
            if c not in ("aic", "bic"):
                raise UsageError(f"ssdm simulate: error: unknown criterion {c!r}")
        for a in args.algorithms:
            if a not in ("backward", "ctar"):
                raise UsageError(f"ssdm simulate: error: unknown algorithm {a!r}")
        sel_h = {"aic": args.sel_h_aic, "bic": args.sel_h_bic}
        reports = run_table2(args.n, args.reps, args.criteria, args.algorithms, args.seed,
                             sel_h, args.kernel, jobs, strict=args.strict)
        bands = {"selection_h": sel_h}
        options = {"criteria": args.criteria, "algorithms": args.algorithms, "strict": args.strict}
    config = RunConfig(
        subcommand="simulate",
        bandwidths=bands,
        kernel=args.kernel,
        seed=args.seed,
        jobs=jobs,
        paths={"out": args.out, "surfaces_out": args.surfaces_out},
        options={"table": args.table, "n": args.n, "reps": args.reps, **options},
    )
    write_json(_document(config, {"reports": [r.to_dict() for r in reports]}), args.out)
    if args.surfaces_out and args.table == 1:
        for r in reports:
            _write_surfaces(r, Path(args.surfaces_out))


def _cmd_diagnose(args) -> None:
    fit = read_fit(args.fit)
    if args.data:
        data = read_dataset(args.data, _schema(args))
        if data.n != fit.n:
            raise DataError(f"diagnose: fit has {fit.n} residuals but {args.data} has {data.n} rows")
    report = residual_diagnostics(fit, args.lags)
    config = RunConfig(
        subcommand="diagnose",
        bandwidths={"h": fit.h, "h1": fit.h1},
        kernel=fit.kernel,
        seed=None,
        jobs=args.jobs,
        paths={"fit": args.fit, "data": args.data, "out": args.out},
        options={"lags": report.lags},
    )
    write_json(_document(config, {"diagnostics": report.to_dict()}), args.out)


_COMMANDS = {"fit": _cmd_fit, "select": _cmd_select, "simulate": _cmd_simulate, "diagnose": _cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        get_kernel(args.kernel)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        _COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"ssdm: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"ssdm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SSDMError as exc:
        print(f"ssdm: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
