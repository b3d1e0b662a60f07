import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from bargain_lab.errors import BootstrapError, ConvergenceError, EstimationError, SingularDesignError
from bargain_lab.stats import (
    bootstrap,
    delta_method,
    gauss_hermite,
    heckman_two_step,
    inverse_mills,
    local_poly_fit,
    maximize_loglik,
    ols_fit,
    probit_fit,
    probit_loglik,
    silverman_bandwidth,
)


def with_const(*cols):
    return np.column_stack([np.ones(len(cols[0]))] + list(cols))


def test_ols_exact_line():
    x = np.arange(10.0)
    fit = ols_fit(with_const(x), 2 * x, ["const", "x"])
    assert fit["x"] == pytest.approx(2.0, abs=1e-12)
    assert fit["const"] == pytest.approx(0.0, abs=1e-12)
    assert np.max(np.abs(fit.info["residuals"])) < 1e-12


def test_ols_hand_solved():
    fit = ols_fit(with_const(np.array([0.0, 1, 2])), np.array([1.0, 3, 4]))
    assert fit.coefficients[1] == pytest.approx(1.5, abs=1e-12)
    assert fit.coefficients[0] == pytest.approx(7 / 6, abs=1e-12)


def test_ols_duplicate_column_named():
    x = np.linspace(0, 1, 20)
    with pytest.raises(SingularDesignError) as err:
        ols_fit(np.column_stack([np.ones(20), x, x]), x, ["const", "a", "b"])
    assert set(err.value.columns) & {"a", "b"}


def test_ols_covariance_symmetric():
    rng = np.random.default_rng(0)
    X = with_const(rng.normal(size=50), rng.normal(size=50))
    fit = ols_fit(X, rng.normal(size=50))
    assert np.max(np.abs(fit.covariance - fit.covariance.T)) < 1e-12


def test_probit_constant_only():
    d = np.r_[np.ones(30), np.zeros(70)]
    fit = probit_fit(np.ones((100, 1)), d)
    assert fit.coefficients[0] == pytest.approx(norm.ppf(0.3), abs=1e-8)
    assert fit.coefficients[0] == pytest.approx(-0.5244, abs=1e-4)
    assert fit.info["grad_norm"] < 1e-6


def test_probit_symmetric_design():
    x = np.r_[np.linspace(-2, 2, 20), np.linspace(-2, 2, 20)]
    d = np.r_[(np.linspace(-2, 2, 20) > 0.5), (np.linspace(-2, 2, 20) > -0.5)].astype(float)
    fit = probit_fit(with_const(x), d)
    assert fit.coefficients[0] == pytest.approx(0.0, abs=1e-8)


def test_probit_matches_grid_search():
    rng = np.random.default_rng(3)
    x = rng.normal(size=20)
    d = (0.3 + 0.8 * x + rng.normal(size=20) > 0).astype(float)
    X = with_const(x)
    fit = probit_fit(X, d)
    # coarse grid, then refine twice around the best cell
    center, half = np.zeros(2), 3.0
    for _ in range(4):
        a = np.linspace(center[0] - half, center[0] + half, 81)
        b = np.linspace(center[1] - half, center[1] + half, 81)
        ll = np.array([[probit_loglik(np.array([ai, bi]), X, d) for bi in b] for ai in a])
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        center, half = np.array([a[i], b[j]]), half / 20
    assert np.max(np.abs(center - fit.coefficients)) < 1e-4


def test_probit_separation_raises():
    x = np.linspace(-1, 1, 40)
    with pytest.raises(ConvergenceError, match="separation"):
        probit_fit(with_const(x), (x > 0).astype(float))


def test_probit_matches_generic_optimizer():
    rng = np.random.default_rng(11)
    x = rng.normal(size=400)
    X = with_const(x)
    d = (-0.2 + 0.7 * x + rng.normal(size=400) > 0).astype(float)
    a = probit_fit(X, d)
    b = maximize_loglik(lambda t: probit_loglik(t, X, d), np.zeros(2))
    assert b.converged
    assert np.max(np.abs(a.coefficients - b.coefficients)) < 1e-6
    np.testing.assert_allclose(a.covariance, b.covariance, rtol=1e-3)


def test_inverse_mills_at_zero():
    assert inverse_mills(0.0) == pytest.approx(0.79788, abs=1e-5)
    assert np.isfinite(inverse_mills(-40.0))


def simulate_selection(rho, n, rng):
    z = rng.normal(size=n)
    x = rng.normal(size=n)
    e = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=n)
    part = (0.3 + 0.8 * z + 0.4 * x + e[:, 0] > 0).astype(float)
    y = 1.0 + 0.5 * x + e[:, 1]
    return with_const(z, x), part, with_const(x), np.where(part == 1, y, np.nan)


def test_heckman_recovers_rho():
    rng = np.random.default_rng(2024)
    Z, part, X, y = simulate_selection(0.5, 10_000, rng)
    res = heckman_two_step(Z, part, X, y, ["const", "z", "x"], ["const", "x"])
    assert 0.4 <= res.rho <= 0.6
    assert not res.no_exclusion
    assert res.outcome["x"] == pytest.approx(0.5, abs=0.05)


def test_heckman_null_correlation_size():
    t_stats = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        Z, part, X, y = simulate_selection(0.0, 1000, rng)
        res = heckman_two_step(Z, part, X, y, ["const", "z", "x"], ["const", "x"])
        t_stats.append(res.imr_coef / res.imr_se)
    share = np.mean(np.abs(t_stats) < 2)
    assert share >= 0.9


def test_heckman_no_exclusion_flag():
    rng = np.random.default_rng(5)
    _, part, X, y = simulate_selection(0.3, 2000, rng)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        res = heckman_two_step(X, part, X, y, ["const", "x"], ["const", "x"])
    assert res.no_exclusion


def test_local_poly_reproduces_quadratic():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, 500)
    y = 1.0 - 2.0 * x + 3.0 * x**2
    grid = np.linspace(0.1, 0.9, 17)
    for h in (0.05, 0.2, 1.0):
        fit = local_poly_fit(x, y, degree=2, bandwidth=h, grid=grid)
        np.testing.assert_allclose(fit.fitted, 1 - 2 * grid + 3 * grid**2, atol=1e-10)
        np.testing.assert_allclose(fit.derivative, -2 + 6 * grid, atol=1e-8)


def test_local_poly_identity_derivative():
    x = np.linspace(0, 1, 300)
    fit = local_poly_fit(x, x, degree=1, bandwidth=0.1, grid=np.linspace(0, 1, 11))
    np.testing.assert_allclose(fit.derivative, 1.0, atol=1e-10)


def test_local_poly_noisy_sine():
    rng = np.random.default_rng(7)
    x = rng.uniform(0, 1, 2000)
    y = np.sin(2 * np.pi * x) + rng.normal(0, 0.2, 2000)
    grid = np.linspace(0.1, 0.9, 81)
    fit = local_poly_fit(x, y, degree=2, bandwidth=silverman_bandwidth(x), grid=grid)
    assert np.max(np.abs(fit.fitted - np.sin(2 * np.pi * grid))) < 0.05


def test_local_poly_sparse_window_is_nan():
    x = np.r_[np.linspace(0, 0.2, 50), np.linspace(0.8, 1, 50)]
    fit = local_poly_fit(x, x**2, degree=2, bandwidth=0.05, grid=np.array([0.1, 0.5, 0.9]))
    assert np.isnan(fit.fitted[1]) and np.isfinite(fit.fitted[[0, 2]]).all()


def test_local_poly_rejects_bad_grid():
    x = np.linspace(0, 1, 50)
    with pytest.raises(ValueError):
        local_poly_fit(x, x, grid=np.array([0.5, 0.4]))
    with pytest.raises(ValueError):
        local_poly_fit(x, x, grid=np.array([0.5, 1.5]))


@settings(max_examples=25, deadline=None)
@given(
    coefs=st.lists(st.floats(-5, 5), min_size=4, max_size=4),
    degree=st.sampled_from([1, 2, 3]),
    h=st.floats(0.15, 2.0),
)
def test_local_poly_polynomial_reproduction(coefs, degree, h):
    x = np.linspace(-1, 1, 201)
    c = np.array(coefs[: degree + 1])
    y = np.polynomial.polynomial.polyval(x, c)
    grid = np.linspace(-0.8, 0.8, 9)
    fit = local_poly_fit(x, y, degree=degree, bandwidth=h, grid=grid)
    scale = 1 + np.abs(c).sum()
    assert np.max(np.abs(fit.fitted - np.polynomial.polynomial.polyval(grid, c))) < 1e-9 * scale


def test_bootstrap_mean_se():
    rng = np.random.default_rng(0)
    x = rng.normal(size=1000)
    res = bootstrap(np.mean, x, B=250, seed=1)
    assert abs(res.se[0] / (1 / np.sqrt(1000)) - 1) < 0.15


def test_bootstrap_constant_and_determinism():
    x = np.arange(100.0)
    assert bootstrap(lambda d: 3.0, x, B=20, seed=0).se[0] == 0.0
    a = bootstrap(lambda d: [d.mean(), d.std()], x, B=40, seed=9, workers=1)
    b = bootstrap(lambda d: [d.mean(), d.std()], x, B=40, seed=9, workers=4)
    assert np.array_equal(a.replicates, b.replicates)
    assert np.array_equal(a.se, b.se) and np.array_equal(a.lo, b.lo)


def test_bootstrap_counts_and_limits_failures():
    x = np.arange(100.0)
    calls = iter(range(10_000))

    def flaky(d):
        if next(calls) % 10 == 0:
            raise EstimationError("boom")
        return d.mean()

    res = bootstrap(flaky, x, B=30, seed=2, estimate=[x.mean()])
    assert res.n_failed == 3 and np.isnan(res.replicates).any()

    def bad(d):
        raise EstimationError("always")

    with pytest.raises(BootstrapError):
        bootstrap(bad, x, B=10, seed=0, estimate=[0.0])
    with pytest.raises(ValueError):
        bootstrap(np.mean, x, B=1, seed=0)


def test_delta_method_ratio():
    se = delta_method(lambda t: t[0] / t[1], np.array([1.0, 2.0]), np.eye(2))
    assert se[0] == pytest.approx(np.sqrt(1 / 4 + 1 / 16), abs=1e-8)
    assert se[0] == pytest.approx(0.5590, abs=1e-4)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_delta_method_identity_and_nonfinite():
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    np.testing.assert_allclose(delta_method(lambda t: t, np.array([1.0, -4.0]), cov),
                               np.sqrt(np.diag(cov)), atol=1e-10)
    with pytest.raises(EstimationError, match="coordinate 1"):
        delta_method(lambda t: np.log(t[1]), np.array([1.0, 5e-7]), np.eye(2))


@settings(max_examples=30, deadline=None)
@given(
    A=st.lists(st.floats(-3, 3), min_size=6, max_size=6),
    theta=st.lists(st.floats(-100, 100), min_size=3, max_size=3),
)
def test_delta_method_linear_exact(A, theta):
    A = np.array(A).reshape(2, 3)
    L = np.array([[1.0, 0, 0], [0.5, 2.0, 0], [-0.3, 0.1, 0.7]])
    cov = L @ L.T
    se = delta_method(lambda t: A @ t, np.array(theta), cov)
    np.testing.assert_allclose(se, np.sqrt(np.diag(A @ cov @ A.T)), atol=1e-8)


def test_maximize_quadratic():
    c = np.array([1.0, -2.0, 0.5])
    res = maximize_loglik(lambda t: -0.5 * np.sum((t - c) ** 2), np.zeros(3))
    assert res.converged
    np.testing.assert_allclose(res.coefficients, c, atol=1e-6)
    np.testing.assert_allclose(res.covariance, np.eye(3), atol=1e-5)


def test_maximize_plateau_terminates():
    res = maximize_loglik(lambda t: -np.tanh(np.sum(t**2)) * 0 + 1.0, np.ones(2), max_iter=50)
    assert res.info["iterations"] <= 50

    res = maximize_loglik(lambda t: float(t[0]), np.zeros(1), max_iter=20, compute_covariance=False)
    assert not res.converged


def test_gauss_hermite_moments():
    x, w = gauss_hermite(2)
    assert np.sum(w * x**2) == pytest.approx(1.0, abs=1e-14)
    x, w = gauss_hermite(3)
    assert np.sum(w * x**4) == pytest.approx(3.0, abs=1e-13)
    x, w = gauss_hermite(16)
    assert np.sum(w * np.exp(0.5 * x)) == pytest.approx(np.exp(0.125), abs=1e-10)
    with pytest.raises(ValueError):
        gauss_hermite(65)


@given(n=st.integers(1, 20), p=st.integers(0, 39))
def test_gauss_hermite_exactness(n, p):
    if p > 2 * n - 1:
        return
    x, w = gauss_hermite(n)
    exact = 0.0 if p % 2 else float(np.prod(np.arange(p - 1, 0, -2, dtype=float))) if p else 1.0
    scale = np.sum(w * np.abs(x) ** p)
    assert abs(np.sum(w * x**p) - exact) < 1e-11 * max(1.0, scale)
