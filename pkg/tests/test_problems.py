import math

import numpy as np
import pytest

from shufflegrad import datasets, problems
from shufflegrad.problems import (
    LogisticNonconvex,
    QuadraticSC,
    component_variance,
    estimate_constants,
    fit_variance_envelope,
    reference_minimum,
    sigma_star,
    softplus,
    widen_sigma_floor,
)


@pytest.fixture(scope="module")
def logistic():
    ds = datasets.synthetic_classification(40, 12, seed=5)
    return LogisticNonconvex(ds, lam=0.01)


@pytest.fixture(scope="module")
def quad_pair():
    """The two-component scalar instance with known optimum at 1."""
    return QuadraticSC(np.array([[1.0], [1.0]]), np.array([[0.0], [2.0]]))


def naive_fd_grad(problem, w, i, h=1e-5):
    g = np.empty_like(w)
    for j in range(len(w)):
        wp, wm = w.copy(), w.copy()
        wp[j] += h
        wm[j] -= h
        g[j] = (problem.comp_value(wp, i) - problem.comp_value(wm, i)) / (2 * h)
    return g


class TestLogisticOracles:
    def test_value_at_origin_is_log_two(self, logistic):
        assert math.isclose(logistic.comp_value(np.zeros(logistic.d), 3), math.log(2))

    def test_penalty_value_direct_substitution(self):
        # component with no features isolates the penalty: log 2 + (0.01/2) * 1/2
        ds = datasets.parse_libsvm("+1\n-1 1:1")
        prob = LogisticNonconvex(ds, lam=0.01)
        w = np.array([1.0])
        assert math.isclose(prob.comp_value(w, 0), math.log(2) + 0.0025)

    def test_penalty_gradient_direct_substitution(self, logistic):
        w = np.zeros(logistic.d)
        w[4] = 1.0
        i = 0
        g = logistic.comp_grad(w, i)
        idx, _ = logistic.dataset.rows[i]
        if 4 not in idx:
            assert math.isclose(g[4], 0.01 * 1.0 / 4.0)

    def test_gradient_at_origin(self, logistic):
        g = logistic.comp_grad(np.zeros(logistic.d), 7)
        idx, val = logistic.dataset.rows[7]
        expected = np.zeros(logistic.d)
        expected[idx] = -logistic.dataset.labels[7] * val / 2.0
        assert np.allclose(g, expected)

    def test_large_margin_does_not_overflow(self):
        ds = datasets.parse_libsvm("+1 1:1")
        prob = LogisticNonconvex(ds, lam=0.0)
        w = np.array([50.0])
        v = prob.comp_value(w, 0)
        assert 0.0 < v < 2e-22
        assert np.isfinite(prob.comp_value(np.array([-800.0]), 0))
        assert np.all(np.isfinite(prob.comp_grad(np.array([-800.0]), 0)))

    def test_softplus_matches_naive_in_safe_range(self):
        z = np.linspace(-30, 30, 101)
        assert np.allclose(softplus(z), np.log1p(np.exp(z)), rtol=1e-12)

    def test_index_out_of_range(self, logistic):
        with pytest.raises(IndexError):
            logistic.comp_value(np.zeros(logistic.d), logistic.n)
        with pytest.raises(IndexError):
            logistic.comp_grad(np.zeros(logistic.d), -1)


class TestGradientConsistency:
    def test_fd_match_logistic(self, logistic):
        g = np.random.default_rng(0)
        for _ in range(20):
            w = g.standard_normal(logistic.d)
            i = int(g.integers(logistic.n))
            ga = logistic.comp_grad(w, i)
            gf = naive_fd_grad(logistic, w, i)
            assert np.linalg.norm(ga - gf) <= 1e-6 * max(
                np.linalg.norm(ga), np.linalg.norm(gf)
            )

    def test_fd_match_quadratic_full_matrices(self):
        g = np.random.default_rng(1)
        base = g.standard_normal((5, 4, 4))
        scales = np.einsum("nij,nkj->nik", base, base) / 4.0  # PSD
        prob = QuadraticSC(scales, g.standard_normal((5, 4)))
        for _ in range(10):
            w = g.standard_normal(4)
            i = int(g.integers(5))
            assert np.allclose(
                prob.comp_grad(w, i), naive_fd_grad(prob, w, i), atol=1e-7
            )

    def test_full_oracles_equal_component_averages(self, logistic):
        w = np.random.default_rng(2).standard_normal(logistic.d)
        n = logistic.n
        loop_val = sum(logistic.comp_value(w, i) for i in range(n)) / n
        loop_grad = sum(logistic.comp_grad(w, i) for i in range(n)) / n
        assert abs(logistic.full_value(w) - loop_val) <= n * 1e-15 * max(1, abs(loop_val))
        assert np.allclose(logistic.full_grad(w), loop_grad, atol=n * 1e-16)


class TestQuadratic:
    def test_two_point_instance(self, quad_pair):
        assert np.isclose(quad_pair.w_star[0], 1.0)
        assert np.isclose(quad_pair.f_star, 0.5)
        assert quad_pair.mu == quad_pair.L == 1.0
        assert np.isclose(quad_pair.sigma_star_sq, 1.0)
        assert np.isclose(quad_pair.tau, 0.5)

    def test_component_minimizer_has_zero_gradient(self, quad_pair):
        assert np.allclose(quad_pair.comp_grad(quad_pair.A[1], 1), 0.0)

    def test_random_instances_solve_normal_equations(self):
        for seed in range(5):
            prob = QuadraticSC.random(30, 6, seed=seed)
            assert np.linalg.norm(prob.full_grad(prob.w_star)) <= 1e-10

    def test_strong_convexity_sandwich(self):
        prob = QuadraticSC.random(25, 5, seed=7)
        g = np.random.default_rng(3)
        for _ in range(30):
            w = prob.w_star + g.standard_normal(5) * 3
            gap = prob.full_value(w) - prob.f_star
            lower = 0.5 * prob.mu * np.sum((w - prob.w_star) ** 2)
            upper = np.sum(prob.full_grad(w) ** 2) / (2 * prob.mu)
            assert lower <= gap * (1 + 1e-9)
            assert gap <= upper * (1 + 1e-9)

    def test_gradient_dominance_with_half_inverse_mu(self):
        prob = QuadraticSC.random(25, 5, seed=8)
        g = np.random.default_rng(4)
        for _ in range(30):
            w = g.standard_normal(5) * 2
            gap = prob.full_value(w) - prob.f_star
            assert gap <= prob.tau * np.sum(prob.full_grad(w) ** 2) * (1 + 1e-9)

    def test_rejects_indefinite_scales(self):
        with pytest.raises(ValueError, match="PSD"):
            QuadraticSC(np.array([[-1.0]]), np.array([[0.0]]))


class TestSmoothness:
    def test_component_gradients_are_lipschitz_with_estimate(self, logistic):
        L = logistic.smoothness_upper_bound()
        g = np.random.default_rng(5)
        for _ in range(20):
            w = g.standard_normal(logistic.d)
            v = w + g.standard_normal(logistic.d) * 0.5
            for i in range(0, logistic.n, 7):
                num = np.linalg.norm(logistic.comp_grad(w, i) - logistic.comp_grad(v, i))
                assert num <= L * np.linalg.norm(w - v) * (1 + 1e-9)

    def test_quadratic_gradients_lipschitz_with_exact_constant(self):
        prob = QuadraticSC.random(12, 4, seed=11, eig_lo=0.2, eig_hi=2.0)
        g = np.random.default_rng(12)
        for _ in range(15):
            w = g.standard_normal(4) * 2
            v = w + g.standard_normal(4)
            for i in range(prob.n):
                num = np.linalg.norm(prob.comp_grad(w, i) - prob.comp_grad(v, i))
                assert num <= prob.L * np.linalg.norm(w - v) * (1 + 1e-9)

    def test_logistic_bound_for_unit_rows(self):
        ds = datasets.synthetic_classification(60, 10, seed=6)
        # rows have values in (0, 1] over <= 2 features, so ||x||^2 <= 2;
        # rescale to push every squared norm under 1
        rows = tuple((i, v / math.sqrt(2.1)) for i, v in ds.rows)
        prob = LogisticNonconvex(
            datasets.Dataset(rows=rows, labels=ds.labels, d=ds.d), lam=0.01
        )
        assert prob.smoothness_upper_bound() <= 0.26


class TestVarianceAndConstants:
    def test_sigma_star_two_point(self, quad_pair):
        assert math.isclose(sigma_star(quad_pair, quad_pair.w_star), 1.0)

    def test_sigma_star_interpolation_case(self):
        a = np.tile(np.array([0.5, -1.0]), (4, 1))
        prob = QuadraticSC(np.ones((4, 2)), a)
        assert sigma_star(prob, prob.w_star) <= 1e-20

    def test_sigma_star_single_component(self):
        prob = QuadraticSC(np.array([[2.0, 1.0]]), np.array([[1.0, -1.0]]))
        assert sigma_star(prob, prob.w_star) <= 1e-18

    def test_sigma_star_requires_stationarity(self, quad_pair):
        with pytest.raises(ValueError, match="not stationary"):
            sigma_star(quad_pair, np.array([2.0]))

    def test_component_variance_single_component(self):
        prob = QuadraticSC(np.array([[1.0]]), np.array([[3.0]]))
        assert component_variance(prob, np.array([0.7])) == 0.0

    def test_component_variance_at_minimizer_equals_sigma_star(self, quad_pair):
        v = component_variance(quad_pair, quad_pair.w_star)
        assert math.isclose(v, 1.0)

    def test_component_variance_matches_naive_loop(self, logistic):
        w = np.random.default_rng(6).standard_normal(logistic.d)
        fast = component_variance(logistic, w)
        g_bar = sum(logistic.comp_grad(w, i) for i in range(logistic.n)) / logistic.n
        naive = (
            sum(
                float(np.sum((logistic.comp_grad(w, i) - g_bar) ** 2))
                for i in range(logistic.n)
            )
            / logistic.n
        )
        assert math.isclose(fast, naive, rel_tol=1e-10)

    def test_quadratic_constants_are_exact(self):
        prob = QuadraticSC(np.ones((3, 2)), np.random.default_rng(7).standard_normal((3, 2)))
        c = estimate_constants(prob, [])
        assert c.L_hat == c.mu == 1.0 and c.kappa == 1.0 and c.tau == 0.5
        assert not c.estimated

    def test_quadratic_variance_envelope_is_global(self):
        prob = QuadraticSC.random(20, 4, seed=9)
        theta, sig_sq = prob.variance_envelope()
        g = np.random.default_rng(8)
        for _ in range(50):
            w = prob.w_star + g.standard_normal(4) * 5
            v = component_variance(prob, w)
            bound = theta * np.sum(prob.full_grad(w) ** 2) + sig_sq
            assert v <= bound * (1 + 1e-9)

    def test_fit_degenerates_to_intercept_on_flat_gradients(self, quad_pair):
        theta, sig_sq = fit_variance_envelope(quad_pair, [quad_pair.w_star, quad_pair.w_star])
        assert theta == 0.0
        assert math.isclose(sig_sq, 1.0)

    def test_fitted_envelope_is_feasible_on_probe_points(self, logistic):
        g = np.random.default_rng(9)
        pts = [g.standard_normal(logistic.d) for _ in range(6)]
        theta, sig_sq = fit_variance_envelope(logistic, pts)
        for w in pts:
            v = component_variance(logistic, w)
            assert v <= theta * np.sum(logistic.full_grad(w) ** 2) + sig_sq + 1e-12

    def test_widen_sigma_floor_covers_new_points(self, logistic):
        g = np.random.default_rng(10)
        base = [g.standard_normal(logistic.d) * 0.1 for _ in range(3)]
        consts = estimate_constants(logistic, base)
        far = [g.standard_normal(logistic.d) * 4 for _ in range(3)]
        widened = widen_sigma_floor(consts, logistic, far)
        for w in far:
            v = component_variance(logistic, w)
            bound = widened.theta_hat * np.sum(logistic.full_grad(w) ** 2) + widened.sigma_sq_hat
            assert v <= bound + 1e-12

    def test_reference_minimum_matches_closed_form(self):
        prob = QuadraticSC.random(15, 3, seed=10)
        f_ref, w_ref = reference_minimum(prob)
        assert abs(f_ref - prob.f_star) <= 1e-10
        assert np.linalg.norm(w_ref - prob.w_star) <= 1e-4
