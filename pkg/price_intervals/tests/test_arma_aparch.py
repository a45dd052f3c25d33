import numpy as np
import pytest

from price_intervals import arma_aparch
from price_intervals.arma_aparch import ArmaAparchParams
from price_intervals.errors import ModelFitError
from price_intervals.metrics import IntervalBatch, picp
from price_intervals.tests.utils import slow, true_aparch_params


@pytest.fixture(scope="module")
def recovery():
    """A 5000-point path of the reference process and its refit."""
    params = true_aparch_params()
    xs = arma_aparch.simulate(params, 5000, seed=0)
    fitted = arma_aparch.fit(xs, 1, 0, n_starts=2, seed=0)
    return params, xs, fitted


def test_params_validation():
    with pytest.raises(ValueError):
        ArmaAparchParams(mu=0.0, a1=0.6, a2=0.4)
    with pytest.raises(ValueError):
        ArmaAparchParams(mu=0.0, phi=(1.1, ))
    with pytest.raises(ValueError):
        ArmaAparchParams(mu=0.0, a0=0.0)
    with pytest.raises(ValueError):
        ArmaAparchParams(mu=0.0, nu=2.0)


def test_degenerate_volatility_coefficients():
    xs = np.array([0.3, -1.0, 2.0, 0.5])
    constant = arma_aparch.filter(
        ArmaAparchParams(mu=0.0, a0=0.4, a1=0.0, a2=0.0), xs)
    np.testing.assert_allclose(constant.sigmas[1:], 0.4)
    shock_only = arma_aparch.filter(
        ArmaAparchParams(mu=0.0, a0=0.4, a1=0.0, a2=0.5), xs)
    np.testing.assert_allclose(shock_only.sigmas[1:],
                               0.4 + 0.5 * np.abs(xs[:-1]))


def test_filter_without_mean_dynamics():
    xs = np.array([0.3, -1.0, 2.0, 0.5])
    state = arma_aparch.filter(ArmaAparchParams(mu=0.2), xs)
    np.testing.assert_allclose(state.residuals, xs - 0.2)


def test_filter_constant_volatility():
    params = ArmaAparchParams(mu=0.0, a0=0.4, a1=0.0, a2=0.0)
    xs = np.random.default_rng(0).normal(size=20)
    state = arma_aparch.filter(params, xs)
    np.testing.assert_allclose(state.sigmas[1:], 0.4)
    assert np.all(state.sigmas > 0)


def test_filter_hand_recursion():
    params = ArmaAparchParams(mu=0.0, phi=(0.5, ))
    state = arma_aparch.filter(params, [1.0, 2.0])
    assert state.residuals[0] == 0.0
    assert state.residuals[1] == 1.5
    # Nothing is left after the burn-in.
    assert state.loglik == 0.0


def test_filter_too_short():
    with pytest.raises(ValueError):
        arma_aparch.filter(ArmaAparchParams(mu=0.0, phi=(0.5, )), [1.0])


def test_loglik_is_continuous():
    xs = arma_aparch.simulate(true_aparch_params(), 300, seed=1)
    base = arma_aparch.loglik(true_aparch_params(), xs)
    nudged = arma_aparch.loglik(true_aparch_params(a1=0.7 + 1e-7), xs)
    assert abs(nudged - base) < 1e-3


def test_aic_formula():
    params = true_aparch_params()
    xs = arma_aparch.simulate(params, 400, seed=2)
    expected = 2 * (1 + 0 + 5) - 2 * arma_aparch.loglik(params, xs)
    assert arma_aparch.aic(params, xs) == pytest.approx(expected, abs=1e-9)


def test_fit_recovers_parameters(recovery):
    params, xs, fitted = recovery
    errors = arma_aparch.standard_errors(fitted, xs)
    truth = params.to_record()
    estimate = fitted.to_record()
    for name, se in errors.items():
        assert abs(estimate[name] - truth[name]) < 3 * se, name
    assert abs(fitted.a1 - 0.7) < 0.1


def test_fit_dominates_true_parameters(recovery):
    params, xs, fitted = recovery
    assert arma_aparch.loglik(fitted, xs) >= (
        arma_aparch.loglik(params, xs) - 1e-6)


def test_standardized_residuals(recovery):
    _, xs, fitted = recovery
    state = arma_aparch.filter(fitted, xs)
    z = state.residuals[state.burn_in:] / state.sigmas[state.burn_in:]
    assert 0.8 <= np.var(z) <= 1.2


@slow
def test_fit_recovery_across_seeds():
    """Eight of ten independent paths recover every parameter within three
    standard errors."""
    truth = true_aparch_params().to_record()
    within = 0
    for seed in range(10):
        xs = arma_aparch.simulate(true_aparch_params(), 5000, seed=seed)
        fitted = arma_aparch.fit(xs, 1, 0, n_starts=2, seed=seed)
        assert abs(fitted.a1 - 0.7) < 0.1, seed
        estimate = fitted.to_record()
        errors = arma_aparch.standard_errors(fitted, xs)
        within += all(
            abs(estimate[name] - truth[name]) < 3 * se
            for name, se in errors.items())
    assert within >= 8


def test_fit_white_noise():
    xs = np.random.default_rng(5).normal(0.5, 1.0, size=2000)
    fitted = arma_aparch.fit(xs, 0, 0, n_starts=2)
    assert fitted.mu == pytest.approx(xs.mean(), abs=0.05)
    assert fitted.a2 < 0.1
    state = arma_aparch.filter(fitted, xs)
    assert np.mean(state.sigmas[100:]) == pytest.approx(
        np.std(xs), rel=0.05)


def test_fit_scale_equivariance():
    xs = arma_aparch.simulate(true_aparch_params(), 1500, seed=6)
    base = arma_aparch.fit(xs, 1, 0, n_starts=1)
    scaled = arma_aparch.fit(4.0 * xs, 1, 0, n_starts=1)
    assert scaled.mu == pytest.approx(4.0 * base.mu, abs=1e-3)
    assert scaled.a0 == pytest.approx(4.0 * base.a0, abs=1e-3)
    for name in ("a1", "a2", "nu", "xi"):
        assert getattr(scaled, name) == pytest.approx(
            getattr(base, name), abs=1e-3)
    np.testing.assert_allclose(scaled.phi, base.phi, atol=1e-3)


def test_fit_errors():
    with pytest.raises(ModelFitError):
        arma_aparch.fit(np.ones(200), 1, 0)
    with pytest.raises(ValueError):
        arma_aparch.fit(np.random.default_rng(0).normal(size=20), 1, 0)
    with pytest.raises(ValueError):
        arma_aparch.fit(np.ones(200), innovation="normal")


def test_select_order_singleton_grid():
    xs = arma_aparch.simulate(true_aparch_params(), 500, seed=7)
    assert arma_aparch.select_order(xs, 0, 0, n_starts=1) == (0, 0)


def test_select_order_finds_ar_term():
    params = true_aparch_params(phi=(0.5, ))
    xs = arma_aparch.simulate(params, 2000, seed=8)
    p, q = arma_aparch.select_order(xs, 1, 0, n_starts=1)
    assert (p, q) == (1, 0)


def test_forecast_symmetric():
    params = ArmaAparchParams(mu=0.0, a0=0.1, a1=0.5, a2=0.2, nu=6.0)
    history = np.random.default_rng(9).normal(size=100)
    out = arma_aparch.forecast_interval(params, history, 0.1)
    assert out.lower == pytest.approx(-out.upper, abs=1e-12)
    assert out.lower < out.upper


def test_forecast_normal_limit():
    params = ArmaAparchParams(mu=0.0, a0=0.1, a1=0.5, a2=0.2, nu=1e6)
    history = np.random.default_rng(10).normal(size=100)
    out = arma_aparch.forecast_interval(params, history, 0.1)
    half_width = 0.5 * (out.upper - out.lower)
    assert half_width == pytest.approx(1.645 * out.sigma, rel=0.01)


def test_forecast_mean_and_scale():
    params = true_aparch_params()
    history = arma_aparch.simulate(params, 200, seed=11)
    out = arma_aparch.forecast_interval(params, history, 0.2)
    state = arma_aparch.filter(params, history)
    assert out.mean == pytest.approx(0.3 * history[-1], abs=1e-12)
    assert out.sigma == pytest.approx(
        0.05 + 0.7 * state.sigmas[-1] + 0.2 * abs(state.residuals[-1]),
        abs=1e-12)


@pytest.mark.parametrize("alpha", [0.01, 0.5, 0.9])
def test_forecast_ordered(alpha):
    params = true_aparch_params(xi=1.4)
    history = arma_aparch.simulate(params, 100, seed=12)
    out = arma_aparch.forecast_interval(params, history, alpha)
    assert out.lower < out.upper


def test_forecast_calibration():
    params = true_aparch_params()
    path = arma_aparch.simulate(params, 1500, seed=13)
    lower, upper = [], []
    for k in range(500, 1500):
        out = arma_aparch.forecast_interval(params, path[:k], 0.1)
        lower.append(out.lower)
        upper.append(out.upper)
    coverage = picp(IntervalBatch(np.array(lower), np.array(upper)),
                    path[500:])
    assert 0.87 <= coverage <= 0.93


def test_simulate_iid_scale():
    params = ArmaAparchParams(mu=1.0, a0=0.5, a1=0.0, a2=0.0, nu=6.0)
    xs = arma_aparch.simulate(params, 100_000, seed=14)
    assert np.std(xs) == pytest.approx(0.5, rel=0.02)
    assert np.mean(xs) == pytest.approx(1.0, abs=0.01)


def test_simulate_deterministic():
    params = true_aparch_params()
    np.testing.assert_array_equal(
        arma_aparch.simulate(params, 300, seed=15),
        arma_aparch.simulate(params, 300, seed=15))


def test_simulate_volatility_clustering():
    params = ArmaAparchParams(mu=0.0, a0=0.05, a1=0.6, a2=0.3, nu=8.0)
    x = np.abs(arma_aparch.simulate(params, 5000, seed=16))
    assert np.corrcoef(x[1:], x[:-1])[0, 1] > 0


def test_save_load(tmpdir, recovery):
    _, xs, fitted = recovery
    path = str(tmpdir.join("arma.params"))
    arma_aparch.save(fitted, path)
    loaded = arma_aparch.load(path)
    assert loaded == fitted
    assert arma_aparch.loglik(loaded, xs) == arma_aparch.loglik(fitted, xs)
