import warnings

import numpy as np
import pytest

from ssdm.locallinear import SpatialDataset
from ssdm.weights import build_exp_decay_weights

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    k = dict(report.user_properties).get("criterion")
    if k is None:
        return
    detail = dict(report.user_properties).get("detail", "")
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    entry = _CRITERIA.setdefault(k, ["PASS", []])
    if status != "PASS" and entry[0] != "FAIL":
        entry[0] = status
    entry[1].append(f"[{status.lower()}] {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, details = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:>2}: {status}")
        for d in details:
            terminalreporter.write_line(f"    {d}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_dataset(rng, n=60, p=2, intercept=True):
    s = rng.uniform(size=(n, 2))
    X = rng.standard_normal((n, p))
    if intercept:
        X[:, 0] = 1.0
    y = rng.standard_normal(n)
    return SpatialDataset(s, X, y)


@pytest.fixture
def small_data(rng):
    return random_dataset(rng)


@pytest.fixture
def small_W(small_data):
    return build_exp_decay_weights(small_data.locations)


@pytest.fixture(autouse=True)
def _quiet_boundary_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*edge of the admissible interval.*")
        yield
