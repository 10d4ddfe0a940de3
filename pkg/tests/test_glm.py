import math

import numpy as np
import pytest

from iftree.errors import RankDeficientError
from iftree.glm import (
    DesignMatrix,
    bernoulli_loglik,
    chisq_sf,
    expit,
    fit_logistic,
    fit_logistic_batch,
    gamma_q,
    log_likelihood,
    lr_test,
)
from oracles import chisq_sf_quad, fd_gradient, grid_search_logistic, loglik_ref


def random_problem(rng, n=100, k=3, scale=1.0):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    beta = rng.normal(size=k) * scale
    y = (rng.random(n) < expit(X @ beta)).astype(float)
    return X, y


class TestFitLogistic:
    def test_intercept_only_closed_form(self):
        X = np.ones((10, 1))
        y = np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 0], dtype=float)
        fit = fit_logistic(X, y)
        assert fit.converged
        assert fit.coefficients[0] == pytest.approx(math.log(0.3 / 0.7), abs=1e-8)

    def test_zero_column_raises(self):
        X = np.column_stack([np.ones(10), np.zeros(10)])
        y = np.repeat([0.0, 1.0], 5)
        with pytest.raises(RankDeficientError):
            fit_logistic(X, y)

    def test_empty_and_overparameterized(self):
        with pytest.raises(ValueError):
            fit_logistic(np.ones((0, 1)), np.array([]))
        with pytest.raises(ValueError):
            fit_logistic(np.ones((2, 3)), np.array([0.0, 1.0]))

    def test_matches_grid_search_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(12):
            X, y = random_problem(rng)
            fit = fit_logistic(X, y)
            ref = grid_search_logistic(X, y)
            assert np.abs(fit.coefficients - ref).max() < 1e-4

    def test_gradient_vanishes_at_optimum(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            X, y = random_problem(rng)
            fit = fit_logistic(X, y)
            grad = fd_gradient(lambda b: loglik_ref(X, b, y), fit.coefficients, h=1e-5)
            assert np.abs(grad).max() < 1e-5

    def test_separation_flag_and_finite_likelihood(self):
        X = np.column_stack([np.ones(8), np.repeat([0.0, 1.0], 4)])
        y = np.repeat([0.0, 1.0], 4)
        fit = fit_logistic(X, y)
        assert fit.separation_flag
        assert np.isfinite(fit.log_likelihood)
        assert fit.log_likelihood <= 0

    def test_log_likelihood_nonpositive(self):
        rng = np.random.default_rng(3)
        X, y = random_problem(rng)
        fit = fit_logistic(X, y)
        assert fit.log_likelihood <= 0

    def test_nested_column_never_hurts(self):
        rng = np.random.default_rng(5)
        for _ in range(8):
            X, y = random_problem(rng, k=3)
            extra = rng.normal(size=(X.shape[0], 1))
            small = fit_logistic(X, y)
            big = fit_logistic(np.hstack([X, extra]), y)
            assert big.log_likelihood >= small.log_likelihood - 1e-9

    def test_design_matrix_wrapper(self):
        rng = np.random.default_rng(9)
        X, y = random_problem(rng, k=2)
        fit = fit_logistic(DesignMatrix(("(intercept)", "x"), X), y)
        assert fit.column_names == ("(intercept)", "x")
        with pytest.raises(ValueError):
            DesignMatrix(("a", "a"), X)


class TestBatchFit:
    def test_batch_equals_single(self):
        rng = np.random.default_rng(11)
        Xs, ys = [], []
        for _ in range(20):
            X, y = random_problem(rng, n=60, k=3)
            Xs.append(X)
            ys.append(y)
        res = fit_logistic_batch(np.stack(Xs), np.stack(ys))
        for b in range(20):
            single = fit_logistic(Xs[b], ys[b])
            assert np.abs(single.coefficients - res.coefficients[b]).max() < 1e-10
            assert abs(single.log_likelihood - res.log_likelihood[b]) < 1e-10

    def test_warm_start_never_decreases_likelihood(self):
        rng = np.random.default_rng(13)
        X, y = random_problem(rng, n=80, k=3)
        start = rng.normal(size=(1, 3))
        ll0 = float(bernoulli_loglik(X @ start[0], y))
        res = fit_logistic_batch(X[None], y, start=start)
        assert res.log_likelihood[0] >= ll0 - 1e-9

    def test_singular_member_is_marked(self):
        rng = np.random.default_rng(101)
        X_good = np.column_stack([np.ones(10), rng.normal(size=10)])
        X_bad = np.column_stack([np.ones(10), np.zeros(10)])
        y = np.array([1.0, 0, 0, 1, 0, 0, 0, 1, 0, 0])  # unbalanced: solve runs
        res = fit_logistic_batch(np.stack([X_good, X_bad]), y)
        assert res.ok[0]
        assert not res.ok[1]


class TestLogLikelihood:
    def test_half_probabilities(self):
        X = np.zeros((4, 1))
        y = np.array([1.0, 0.0, 1.0, 0.0])
        fit = fit_logistic(np.ones((4, 1)), y)
        val = log_likelihood(fit, X, y)  # eta = 0 everywhere
        assert val == pytest.approx(4 * math.log(0.5), abs=1e-12)

    def test_saturated_approaches_zero(self):
        X = np.array([[-40.0], [40.0], [-40.0], [40.0]])
        y = np.array([0.0, 1.0, 0.0, 1.0])
        from iftree.glm import LogisticFit
        fit = LogisticFit(np.array([1.0]), 0.0, 0, True, False)
        val = log_likelihood(fit, X, y)
        assert -1e-8 < val < 0

    def test_matches_per_observation_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            X, y = random_problem(rng, n=40, k=3)
            beta = rng.normal(size=3) * 2
            ours = float(bernoulli_loglik(X @ beta, y))
            assert abs(ours - loglik_ref(X, beta, y)) < 1e-10

    def test_monotone_over_newton_iterations(self):
        # run the fit one capped iteration at a time; likelihood must not drop
        rng = np.random.default_rng(19)
        X, y = random_problem(rng, n=60, k=3)
        lls = []
        beta = np.zeros((1, 3))
        for it in range(1, 9):
            res = fit_logistic_batch(X[None], y, max_iter=it)
            lls.append(float(res.log_likelihood[0]))
        assert all(b >= a - 1e-9 for a, b in zip(lls, lls[1:]))


class TestLrTest:
    def test_identical_models(self):
        rng = np.random.default_rng(23)
        X, y = random_problem(rng, k=2)
        fit = fit_logistic(X, y)
        res = lr_test(fit, fit, df=1)
        assert res.statistic == 0.0
        assert res.p_value == 1.0

    def test_reference_quantiles(self):
        # 3.8415 on 1 df and 5.9915 on 2 df both sit at the 5% tail;
        # expected values frozen from the quadrature oracle
        assert chisq_sf_quad(3.8415, 1) == pytest.approx(0.0499987, abs=1e-6)
        assert chisq_sf(3.8415, 1) == pytest.approx(chisq_sf_quad(3.8415, 1), abs=1e-10)
        assert chisq_sf_quad(5.9915, 2) == pytest.approx(0.0499991, abs=1e-6)
        assert chisq_sf(5.9915, 2) == pytest.approx(chisq_sf_quad(5.9915, 2), abs=1e-10)

    def test_df_must_be_positive(self):
        rng = np.random.default_rng(29)
        X, y = random_problem(rng, k=2)
        fit = fit_logistic(X, y)
        with pytest.raises(ValueError):
            lr_test(fit, fit, df=0)

    def test_statistic_clamped_nonnegative(self):
        from iftree.glm import LogisticFit
        full = LogisticFit(np.zeros(1), -10.0 - 1e-12, 1, True, False)
        restricted = LogisticFit(np.zeros(1), -10.0, 1, True, False)
        res = lr_test(full, restricted, df=1)
        assert res.statistic == 0.0


class TestChisq:
    def test_tail_against_quadrature(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            x = float(rng.uniform(0.05, 30.0))
            df = int(rng.integers(1, 8))
            assert abs(chisq_sf(x, df) - chisq_sf_quad(x, df)) < 1e-10

    def test_monotone_in_statistic(self):
        xs = np.linspace(0.01, 30, 100)
        for df in (1, 2, 5):
            ps = [chisq_sf(x, df) for x in xs]
            assert all(b < a for a, b in zip(ps, ps[1:]))

    def test_edge_cases(self):
        assert chisq_sf(0.0, 1) == 1.0
        assert gamma_q(0.5, 0.0) == 1.0
        with pytest.raises(ValueError):
            gamma_q(-1.0, 1.0)
        with pytest.raises(ValueError):
            chisq_sf(1.0, 0)
