import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssdm.errors import BandwidthTooSmall, DataError
from ssdm.kernels import EPANECHNIKOV
from ssdm.locallinear import (
    SpatialDataset,
    build_smoother_cache,
    local_linear_fit,
    local_level_maps,
    min_feasible_bandwidth,
    projection_quadratic,
    smoother_matrix,
)
from ssdm.simulate import example1, generate
from ssdm.weights import build_exp_decay_weights, load_weights


def _oracle_level(data, v, s, h):
    """Weighted least squares on the unscaled local design via lstsq."""
    d = data.locations - np.asarray(s)
    w = EPANECHNIKOV.profile(np.linalg.norm(d, axis=1) / h) / h**2
    Z = np.hstack([data.X, data.X * d[:, :1], data.X * d[:, 1:]])
    r = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(Z * r[:, None], v * r, rcond=None)
    return coef[: data.p]


def _linear_signal(rng, data):
    c = rng.standard_normal(data.p)
    D = rng.standard_normal((data.p, 2))
    beta = c + data.locations @ D.T
    return np.einsum("ij,ij->i", data.X, beta), c, D


def test_constant_response_intercept_only(rng):
    n = 40
    data = SpatialDataset(rng.uniform(size=(n, 2)), np.ones((n, 1)), np.full(n, 2.5))
    fit = local_linear_fit(data, data.y, (0.3, 0.6), 0.5)
    # exact up to the 1e-10 relative ridge
    assert fit.a[0] == pytest.approx(2.5, rel=1e-9)
    np.testing.assert_allclose(fit.B, 0.0, atol=1e-8)


def test_reproduces_location_linear_coefficients(rng, small_data):
    v, c, D = _linear_signal(rng, small_data)
    s = np.array([0.4, 0.55])
    fit = local_linear_fit(small_data, v, s, 0.5)
    np.testing.assert_allclose(fit.a, c + D @ s, atol=1e-9)
    np.testing.assert_allclose(fit.B, D, atol=1e-8)


def test_smoother_exactness(rng, small_data):
    v, _, _ = _linear_signal(rng, small_data)
    S = smoother_matrix(small_data, 0.45)
    err = np.max(np.abs(v - S @ v))
    assert err < 1e-8 * np.max(np.abs(v))


def test_intercept_rows_sum_to_one(rng):
    n = 50
    data = SpatialDataset(rng.uniform(size=(n, 2)), np.ones((n, 1)), rng.standard_normal(n))
    S = smoother_matrix(data, 0.4)
    np.testing.assert_allclose(S.sum(axis=1), 1.0, atol=1e-10)


def test_rows_match_independent_wls(rng, small_data):
    h = 0.5
    S = smoother_matrix(small_data, h)
    eye = np.eye(small_data.n)
    for i in (0, 7, 31, 59):
        L = np.column_stack([_oracle_level(small_data, eye[:, k], small_data.locations[i], h) for k in range(small_data.n)])
        np.testing.assert_allclose(S[i], small_data.X[i] @ L, atol=1e-10)


def test_levels_do_not_depend_on_chunking(rng, small_data, monkeypatch):
    import ssdm.locallinear as ll

    full = local_level_maps(small_data, 0.5)
    monkeypatch.setattr(ll, "CHUNK_BYTES", 1)
    np.testing.assert_array_equal(local_level_maps(small_data, 0.5), full)


def test_permutation_conjugates_smoother(rng):
    data = SpatialDataset(rng.uniform(size=(40, 2)), rng.standard_normal((40, 2)), rng.standard_normal(40))
    perm = rng.permutation(40)
    S = smoother_matrix(data, 0.6)
    Sp = smoother_matrix(SpatialDataset(data.locations[perm], data.X[perm], data.y[perm]), 0.6)
    np.testing.assert_allclose(Sp, S[np.ix_(perm, perm)], atol=1e-10)


def test_covariate_units_do_not_trigger_guard(rng):
    n = 80
    X = np.column_stack([np.ones(n), 1e-3 * rng.standard_normal(n), 1e3 * rng.standard_normal(n)])
    data = SpatialDataset(rng.uniform(size=(n, 2)), X, rng.standard_normal(n))
    base = SpatialDataset(data.locations, X / [1, 1e-3, 1e3], data.y)
    np.testing.assert_allclose(smoother_matrix(data, 0.5), smoother_matrix(base, 0.5), atol=1e-9)


def test_sparse_window_error_names_location_and_min_h(rng):
    data = SpatialDataset(rng.uniform(size=(60, 2)), rng.standard_normal((60, 2)), rng.standard_normal(60))
    with pytest.raises(BandwidthTooSmall) as info:
        smoother_matrix(data, 0.05)
    err = info.value
    assert err.index is not None
    assert err.location == tuple(data.locations[err.index])
    expected = min_feasible_bandwidth(data.locations, data.locations[err.index], 2)
    assert err.min_h == pytest.approx(expected)
    assert "use h >" in str(err)


def test_min_feasible_bandwidth_admits_3p_points(rng):
    s = rng.uniform(size=(100, 2))
    t = s[3]
    h = min_feasible_bandwidth(s, t, 2)
    inside = np.count_nonzero(EPANECHNIKOV.profile(np.linalg.norm(s - t, axis=1) / (h * 1.0001)) > 0)
    assert inside >= 6


def test_dataset_validation():
    with pytest.raises(DataError):
        SpatialDataset(np.zeros((5, 2)), np.zeros((5, 2)), np.zeros(5))  # n <= 3p
    with pytest.raises(DataError):
        SpatialDataset(np.zeros((10, 3)), np.zeros((10, 1)), np.zeros(10))
    with pytest.raises(DataError):
        SpatialDataset(np.zeros((10, 2)), np.full((10, 1), np.inf), np.zeros(10))


def test_location_range_is_larger_span():
    s = np.array([[0, 0], [2, 0.5], [1, 1], [0.5, 0.2]], dtype=float)
    data = SpatialDataset(s, np.ones((4, 1)), np.zeros(4))
    assert data.axis_spans == (2.0, 1.0)
    assert data.location_range == 2.0


def test_quadratic_examples(rng, small_data, small_W):
    S = smoother_matrix(small_data, 0.5)
    c0, c1, c2 = projection_quadratic(S, load_weights(np.zeros((60, 60))), small_data.y)
    assert c1 == 0.0 and c2 == 0.0
    assert projection_quadratic(S, small_W, np.zeros(60)) == (0.0, 0.0, 0.0)
    cache = build_smoother_cache(small_data, small_W, 0.5, S=S)
    r = (np.eye(60) - S) @ (small_data.y - 0.3 * (small_W @ small_data.y))
    assert cache.sigma2(0.3) == pytest.approx(r @ r / 60, abs=1e-10)
    assert cache.c2 >= 0


@settings(max_examples=20, deadline=None)
@given(alpha=st.floats(-0.999, 0.999))
def test_sigma2_nonnegative_on_interval(alpha):
    rng = np.random.default_rng(5)
    data = SpatialDataset(rng.uniform(size=(40, 2)), rng.standard_normal((40, 2)), rng.standard_normal(40))
    cache = build_smoother_cache(data, build_exp_decay_weights(data.locations), 0.6)
    assert cache.sigma2(alpha) >= 0


def test_example1_level_close_to_truth():
    data, W, beta, _ = generate(example1(500, seed=11))
    cfg = example1(500, seed=11)
    Ay = data.y - cfg.alpha * (W @ data.y)
    fit = local_linear_fit(data, Ay, (0.5, 0.5), 0.4)
    truth = np.array([f(np.array([[0.5, 0.5]]))[0] for f in cfg.beta_functions])
    assert np.all(np.abs(fit.a - truth) < 0.5)
