import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from ssdm.diagnostics import acf, default_lags, normal_qq, pacf, residual_diagnostics
from ssdm.errors import DataError


def _ar1(rng, n, phi):
    e = rng.standard_normal(n + 200)
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, e.size):
        x[t] = phi * x[t - 1] + e[t]
    return x[200:]


def test_white_noise_inside_band(rng):
    rep = residual_diagnostics(rng.standard_normal(1000), L=40)
    inside = np.abs(rep.acf) <= rep.band
    assert rep.band == pytest.approx(1.96 / np.sqrt(1000))
    assert inside.mean() >= 0.95


def test_ar1_identities(rng):
    rep = residual_diagnostics(_ar1(rng, 5000, 0.8), L=10)
    assert rep.acf[0] == pytest.approx(0.8, abs=0.05)
    assert rep.pacf[1] == pytest.approx(0.0, abs=0.05)


def test_pacf_lag_one_equals_acf(rng):
    x = _ar1(rng, 300, -0.4)
    rep = residual_diagnostics(x, L=12)
    assert rep.pacf[0] == rep.acf[0]
    assert np.all(np.abs(rep.pacf) <= 1 + 1e-10)


def test_matches_statsmodels(rng):
    tsa = pytest.importorskip("statsmodels.tsa.stattools")
    x = _ar1(rng, 400, 0.5) + 3.0
    np.testing.assert_allclose(acf(x, 20), tsa.acf(x, nlags=20, adjusted=False, fft=False), atol=1e-12)
    r = acf(x, 20)
    np.testing.assert_allclose(pacf(r), tsa.pacf(x, nlags=20, method="ldb")[1:], atol=1e-10)


def test_acf_lag_zero_and_default_lags(rng):
    assert acf(rng.standard_normal(50), 5)[0] == 1.0
    assert default_lags(1000) == 40
    assert default_lags(100) == 25


def test_qq_positions_and_standardisation(rng):
    x = rng.normal(2.0, 3.0, size=25)
    q, r = normal_qq(x)
    np.testing.assert_allclose(q, stats.norm.ppf((np.arange(1, 26) - 0.5) / 25), atol=1e-14)
    np.testing.assert_allclose(r, np.sort((x - x.mean()) / x.std(ddof=1)), atol=1e-14)


def test_symmetric_residuals_give_symmetric_qq(rng):
    half = rng.standard_normal(20)
    q, r = normal_qq(np.concatenate([half, -half]))
    np.testing.assert_allclose(q, -q[::-1], atol=1e-14)
    np.testing.assert_allclose(r, -r[::-1], atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, 30, elements=st.floats(-100, 100)))
def test_sign_flip(x):
    if np.std(x) < 1e-6:
        return
    a = residual_diagnostics(x, L=6)
    b = residual_diagnostics(-x, L=6)
    np.testing.assert_allclose(b.acf, a.acf, atol=1e-10)
    np.testing.assert_allclose(b.pacf, a.pacf, atol=1e-8)
    np.testing.assert_allclose(b.qq_sample, -a.qq_sample[::-1], atol=1e-10)
    assert np.all(np.abs(a.pacf) <= 1 + 1e-10)


def test_rejects_constant_and_bad_lags():
    with pytest.raises(DataError):
        residual_diagnostics(np.full(30, 1.5))
    with pytest.raises(DataError):
        residual_diagnostics(np.arange(10.0), L=10)
    with pytest.raises(DataError):
        residual_diagnostics(np.array([1.0, np.nan, 2.0, 3.0]))


def test_report_metadata_and_dict(small_data, small_W):
    from ssdm.profile import BandwidthPolicy, estimate

    fit = estimate(small_data, small_W, BandwidthPolicy(0.5, 0.7))
    rep = residual_diagnostics(fit)
    assert rep.lags == default_lags(small_data.n)
    np.testing.assert_array_equal(rep.residuals, fit.residuals)
    d = rep.to_dict()
    assert d["metadata"]["ordering"] == "dataset row order"
    assert len(d["acf"]["values"]) == rep.lags == len(d["pacf"]["values"])
