import json
import math

import numpy as np
import pytest
from scipy.stats import nbinom

from drivevol.errors import ConvergenceError, DataError
from drivevol.models import (INTERCEPT, NEGBIN, POISSON, RANDOM_POISSON, DesignMatrix, FitResult, ModelSpec,
                             fit, fit_metrics, fit_negbin, fit_poisson, fit_random_poisson, format_table,
                             lm_overdispersion_test, marginal_effects, nb_loglike, poisson_loglike,
                             poisson_score, round_counts, simulated_loglike)
from drivevol.synth import gen_counts


def dataset(n=300, beta=(0.5, 0.3), seed=0, extra=0):
    rng = np.random.default_rng(seed)
    cols = {"x": rng.uniform(0, 2, n)}
    for k in range(extra):
        cols[f"z{k}"] = rng.normal(size=n)
    X = np.column_stack([np.ones(n)] + list(cols.values()))
    y = gen_counts(X, beta[:X.shape[1]] if len(beta) >= X.shape[1] else list(beta) + [0.0] * extra, seed=seed + 1)
    return DesignMatrix.build(cols, y)


def test_fit_metrics_examples():
    aic, rho = fit_metrics(-578.32, -296.83, 8)
    assert aic == pytest.approx(609.66, abs=1e-9) and rho == pytest.approx(0.48674, abs=1e-5)
    assert fit_metrics(-10.0, -10.0, 1)[1] == 0.0
    with pytest.raises(ValueError):
        fit_metrics(0.0, -1.0, 1)


def test_design_validation():
    with pytest.raises(DataError):
        DesignMatrix(np.array([[1.0, math.nan]]), ["a", "b"], [1])
    with pytest.raises(DataError):
        DesignMatrix(np.ones((2, 2)), ["a", "a"], [1, 2])
    with pytest.raises(DataError):
        DesignMatrix(np.ones((2, 1)), ["a"], [1, 2.5])
    d = DesignMatrix.build({"x": [1.0, 2.0]}, [0, 1])
    assert d.names == [INTERCEPT, "x"] and np.all(d.column(INTERCEPT) == 1)


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(family=RANDOM_POISSON, covariates=["x"], random_covariates=["z"])
    with pytest.raises(ValueError):
        ModelSpec(family=RANDOM_POISSON, covariates=["x"], random_covariates=["x"], n_draws=49)


def test_round_counts():
    assert round_counts([0.5, 1.49, 2.5, 7.56]).tolist() == [1, 1, 3, 8]


def test_intercept_only():
    d = DesignMatrix.build({}, [2, 3, 4])
    res = fit_poisson(d)
    assert res.beta[INTERCEPT] == pytest.approx(math.log(3), abs=1e-10)
    assert res.ll_converged == pytest.approx(res.ll_zero, abs=1e-12)


def test_poisson_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n, p = int(rng.integers(5, 60)), int(rng.integers(1, 5))
        X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))]) if p > 1 else np.ones((n, 1))
        y = rng.poisson(2.0, n)
        beta = rng.normal(0, 0.3, p)
        g = poisson_score(beta, X, y)
        h = 1e-6
        fd = np.array([(poisson_loglike(beta + h * e, X, y) - poisson_loglike(beta - h * e, X, y)) / (2 * h)
                       for e in np.eye(p)])
        assert np.allclose(g, fd, rtol=1e-4, atol=1e-4 * max(1.0, np.abs(g).max()))


def test_nb_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    X = np.column_stack([np.ones(80), rng.uniform(0, 2, 80)])
    y = rng.poisson(3.0, 80)
    for alpha in (1e-6, 0.3, 2.0):
        theta = np.array([0.4, 0.2, alpha])
        _, g = nb_loglike(theta[:2], theta[2], X, y, grad=True)
        h = 1e-7
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (nb_loglike((theta + e)[:2], (theta + e)[2], X, y)
                  - nb_loglike((theta - e)[:2], (theta - e)[2], X, y)) / (2 * h)
            assert g[j] == pytest.approx(fd, rel=1e-4, abs=1e-4)


def test_random_gradient_matches_finite_differences():
    from drivevol.models import _Simulator

    d = dataset(n=60, seed=3)
    sim = _Simulator(d.X, d.y, [1], 60, 10)
    beta, sigma = np.array([0.4, 0.3]), np.array([0.25])
    _, g = sim.loglike(beta, sigma, grad=True)
    h = 1e-6
    theta = np.concatenate([beta, sigma])
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (sim.loglike((theta + e)[:2], (theta + e)[2:]) - sim.loglike((theta - e)[:2], (theta - e)[2:])) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-4, abs=1e-5)


def test_poisson_score_equation_and_recovery():
    d = dataset(n=116, seed=11)
    res = fit_poisson(d)
    lam = np.exp(d.X @ res.beta_vector)
    assert lam.sum() == pytest.approx(d.y.sum(), rel=1e-6)
    assert abs(res.beta["x"] - 0.3) < 3 * res.se["x"]
    assert res.grad_norm < 1e-8 and res.converged
    assert res.ll_converged >= res.ll_zero
    assert 0 <= res.mcfadden < 1
    assert res.aic == pytest.approx(2 * res.k - 2 * res.ll_converged)
    assert res.k == 2


def test_negbin_nests_poisson():
    d = dataset(n=200, seed=12)
    res = fit_poisson(d)
    assert nb_loglike(res.beta_vector, 0.0, d.X, d.y) == pytest.approx(res.ll_converged, abs=1e-8)
    nb = fit_negbin(d, ModelSpec(family=NEGBIN, covariates=["x"]))
    assert nb.alpha >= 0 and nb.k == 3
    assert nb.ll_converged >= res.ll_converged - 1e-8


def test_negbin_recovers_alpha():
    rng = np.random.default_rng(21)
    n, alpha = 1000, 0.5
    x = rng.uniform(0, 2, n)
    mu = np.exp(0.5 + 0.3 * x)
    y = nbinom.rvs(1 / alpha, 1 / (1 + alpha * mu), random_state=rng)
    nb = fit_negbin(DesignMatrix.build({"x": x}, y), ModelSpec(family=NEGBIN, covariates=["x"]))
    assert 0.3 <= nb.alpha <= 0.7


def test_negbin_alpha_insignificant_on_poisson_data():
    hits = 0
    for seed in range(100):
        nb = fit_negbin(dataset(n=200, seed=1000 + seed), ModelSpec(family=NEGBIN, covariates=["x"]))
        hits += nb.alpha_z < 1.96
    assert hits >= 90


def test_random_sigma_zero_reproduces_poisson_exactly():
    d = dataset(n=80, seed=13)
    res = fit_poisson(d)
    for R in (50, 200):
        ll = simulated_loglike(d, res.beta_vector, [0.0], ["x"], n_draws=R)
        assert ll == res.ll_converged


def test_random_fit_deterministic_and_stable():
    d = dataset(n=300, seed=14)
    spec = ModelSpec(family=RANDOM_POISSON, covariates=["x"], random_covariates=["x"], n_draws=100)
    a = fit_random_poisson(d, spec)
    b = fit_random_poisson(d, spec)
    assert a.to_json() == b.to_json()
    c = fit_random_poisson(d, ModelSpec(family=RANDOM_POISSON, covariates=["x"], random_covariates=["x"], n_draws=200))
    assert abs(c.ll_converged - a.ll_converged) < 0.5
    assert a.k == 3 and list(a.sigma) == ["x"] and a.sigma["x"] >= 0


def test_rescaling_invariance():
    d = dataset(n=150, seed=15, extra=1)
    res = fit_poisson(d)
    c = 7.5
    X = d.X.copy()
    X[:, d.names.index("x")] *= c
    res2 = fit_poisson(DesignMatrix(X, d.names, d.y))
    assert res2.beta["x"] == pytest.approx(res.beta["x"] / c, rel=1e-6)
    assert res2.ll_converged == pytest.approx(res.ll_converged, abs=1e-6)
    assert res2.marginal_effects["x"] * c == pytest.approx(res.marginal_effects["x"], rel=1e-6)


def test_marginal_effects_formulas():
    X = np.column_stack([np.ones(4), [1.0, 2.0, 3.0, 4.0]])
    d = DesignMatrix(X, [INTERCEPT, "x"], [5, 5, 5, 5])
    res = FitResult(POISSON, [INTERCEPT, "x"], {INTERCEPT: math.log(5), "x": 0.0}, {}, {}, {})
    assert marginal_effects(res, d)["x"] == 0.0
    X = np.column_stack([np.ones(6), [0, 0, 0, 1, 1, 1]])
    d = DesignMatrix(X, [INTERCEPT, "flag"], [1, 2, 3, 4, 6, 8])
    res = fit_poisson(d)
    assert res.marginal_effects["flag"] == pytest.approx(6.0 - 2.0, rel=1e-8)


def test_marginal_effect_continuous_constant_lambda():
    X = np.column_stack([np.ones(3), [0.0, 0.0, 0.0]])
    d = DesignMatrix(X, [INTERCEPT, "x"], [5, 5, 5])
    res = FitResult(POISSON, [INTERCEPT, "x"], {INTERCEPT: math.log(5), "x": 0.1}, {}, {}, {})
    assert marginal_effects(res, d)["x"] == pytest.approx(0.5)


def test_lm_test_rates_small():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 2, 300)
    mu = np.exp(0.5 + 0.3 * x)
    y = nbinom.rvs(1.0, 1 / (1 + mu), random_state=rng)
    d = DesignMatrix.build({"x": x}, y)
    _, p = lm_overdispersion_test(fit_poisson(d), d)
    assert p < 0.01


def test_fit_json_round_trip():
    d = dataset(n=100, seed=16)
    res = fit(d, ModelSpec(covariates=["x"]))
    back = FitResult.from_dict(json.loads(res.to_json()))
    assert back.to_json() == res.to_json()
    table = format_table(res)
    assert "McFadden" in table and "x" in table


def test_separation_raises():
    d = DesignMatrix.build({"x": [0.0, 0.0, 1.0, 1.0]}, [0, 0, 1, 2])
    with pytest.raises(ConvergenceError) as err:
        fit_poisson(d, ModelSpec(covariates=["x"]))
    assert err.value.diagnostics["min_mu"] < 1e-8


def test_overflow_raises():
    X = np.array([[1.0, 800.0], [1.0, 900.0]])
    with pytest.raises(ConvergenceError):
        poisson_loglike(np.array([0.0, 1.0]), X, [1, 2])


def test_all_zero_counts():
    with pytest.raises(DataError):
        fit_poisson(DesignMatrix.build({}, [0, 0, 0]))
