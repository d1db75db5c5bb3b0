import math

import numpy as np
import pytest

from shufflegrad import datasets, optimizer, schedules, shuffling
from shufflegrad.errors import ConfigError, DivergenceError
from shufflegrad.optimizer import (
    OptimizerConfig,
    audit_epoch,
    audit_rr_expectation,
    audit_run,
    run,
    run_epoch,
    run_sgd_baseline,
    weighted_average_iterate,
)
from shufflegrad.problems import (
    LogisticNonconvex,
    QuadraticSC,
    estimate_constants,
    widen_sigma_floor,
)


def two_point_quadratic():
    return QuadraticSC(np.array([[1.0], [1.0]]), np.array([[0.0], [2.0]]))


def rr(seed=0):
    return shuffling.ShuffleStrategy("rr", seed=seed)


class TestRunEpoch:
    def test_single_component_collapses_to_full_step(self):
        prob = QuadraticSC(np.array([[2.0, 1.0]]), np.array([[1.0, -1.0]]))
        w = np.array([0.5, 0.5])
        w_next, dev, _ = run_epoch(prob, w, 0.3, np.array([0]))
        assert np.allclose(w_next, w - 0.3 * prob.full_grad(w))
        assert dev == 0.0

    def test_two_step_hand_example(self):
        prob = two_point_quadratic()
        w_next, dev, _ = run_epoch(prob, np.array([0.0]), 1.0, np.array([0, 1]))
        assert np.isclose(w_next[0], 1.0) and dev == 0.0
        w_next, dev, _ = run_epoch(prob, np.array([0.0]), 1.0, np.array([1, 0]))
        assert np.isclose(w_next[0], 0.5) and np.isclose(dev, 1.0)

    def test_inner_step_is_epoch_rate_over_n(self):
        prob = QuadraticSC.random(5, 3, seed=0)
        w0 = np.ones(3)
        eta = 0.2
        w_next, _, _ = run_epoch(prob, w0, eta, np.arange(5))
        w = w0.copy()
        for i in range(5):
            w = w - eta / 5 * prob.comp_grad(w, i)
        assert np.array_equal(w_next, w)

    def test_shared_minimizer_is_fixed_point(self):
        center = np.array([1.5, -2.0])
        prob = QuadraticSC(np.ones((4, 2)), np.tile(center, (4, 1)))
        w_next, dev, _ = run_epoch(prob, center, 0.7, np.array([2, 0, 3, 1]))
        assert np.array_equal(w_next, center)
        assert dev == 0.0

    def test_recorded_inner_iterates(self):
        prob = two_point_quadratic()
        _, _, inner = run_epoch(prob, np.array([0.0]), 1.0, np.array([1, 0]), record_inner=True)
        assert len(inner) == 3
        assert np.isclose(inner[1][0], 1.0) and np.isclose(inner[2][0], 0.5)

    def test_permutation_length_checked(self):
        prob = two_point_quadratic()
        with pytest.raises(ValueError):
            run_epoch(prob, np.array([0.0]), 1.0, np.array([0]))


class TestRun:
    def test_epoch_budget_validated_at_construction(self):
        with pytest.raises(ConfigError):
            OptimizerConfig(epochs=0, schedule=schedules.constant(0.1), strategy=rr())

    def test_incremental_descent_is_monotone(self):
        # small constant rate, started far from the cyclic steady state: the
        # descent correction term stays dominated and every epoch decreases F
        prob = two_point_quadratic()
        cfg = OptimizerConfig(
            epochs=30,
            schedule=schedules.constant(0.05),
            strategy=shuffling.ShuffleStrategy("ig"),
        )
        result = run(prob, cfg, seed=0, w0=np.array([-4.0]))
        fs = [result.initial_f] + list(result.series("f_val"))
        assert all(b < a for a, b in zip(fs, fs[1:]))

    def test_bitwise_reproducibility(self):
        prob = QuadraticSC.random(12, 4, seed=1)
        cfg = OptimizerConfig(
            epochs=8, schedule=schedules.poly(0.5, 1.0, 0.5), strategy=rr(3)
        )
        a = run(prob, cfg, seed=3)
        b = run(prob, cfg, seed=3)
        assert np.array_equal(a.final_weights, b.final_weights)
        assert [t.permutation_digest for t in a.traces] == [
            t.permutation_digest for t in b.traces
        ]
        assert np.array_equal(a.series("f_val"), b.series("f_val"))

    def test_incremental_ignores_seed(self):
        prob = QuadraticSC.random(12, 4, seed=1)
        cfg = OptimizerConfig(
            epochs=6,
            schedule=schedules.constant(0.2),
            strategy=shuffling.ShuffleStrategy("ig"),
        )
        a = run(prob, cfg, seed=0)
        b = run(prob, cfg, seed=99)
        assert np.array_equal(a.final_weights, b.final_weights)

    def test_stationary_start_stays_for_every_strategy(self):
        center = np.array([0.3, 0.3, 0.3])
        prob = QuadraticSC(np.ones((5, 3)), np.tile(center, (5, 1)))
        for kind in ("rr", "so", "ig"):
            cfg = OptimizerConfig(
                epochs=10,
                schedule=schedules.constant(0.4),
                strategy=shuffling.ShuffleStrategy(kind, seed=4),
            )
            result = run(prob, cfg, seed=4, w0=center)
            assert np.array_equal(result.final_weights, center)

    @pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
    def test_divergence_carries_epoch_and_partial(self):
        prob = QuadraticSC.random(6, 3, seed=2, eig_lo=0.5, eig_hi=1.0)
        cfg = OptimizerConfig(
            epochs=400, schedule=schedules.constant(1e4), strategy=rr(0)
        )
        with pytest.raises(DivergenceError) as err:
            run(prob, cfg, seed=0)
        assert err.value.epoch >= 1
        assert err.value.partial is not None
        assert err.value.partial.epochs == err.value.epoch - 1

    def test_extras_recorded(self):
        prob = two_point_quadratic()
        cfg = OptimizerConfig(epochs=3, schedule=schedules.constant(0.1), strategy=rr())
        result = run(prob, cfg, 0, extra_metrics=lambda w: {"first": float(w[0])})
        assert all("first" in t.extras for t in result.traces)


class TestWeightedAverage:
    def test_equal_weights_give_plain_average(self):
        prob = QuadraticSC.random(8, 3, seed=3)
        cfg = OptimizerConfig(epochs=5, schedule=schedules.constant(0.1), strategy=rr(1))
        result = run(prob, cfg, 1)
        prev = [result.initial_weights] + [t.w_tilde for t in result.traces[:-1]]
        assert np.allclose(weighted_average_iterate(result), np.mean(prev, axis=0))

    def test_single_epoch_returns_start(self):
        prob = two_point_quadratic()
        cfg = OptimizerConfig(epochs=1, schedule=schedules.constant(0.1), strategy=rr())
        result = run(prob, cfg, 0, w0=np.array([0.25]))
        assert np.allclose(weighted_average_iterate(result), [0.25])

    def test_two_epoch_substitution(self):
        # weights (1, 3) over iterates (0, 4): (1*0 + 3*4) / 4 = 3
        prob = two_point_quadratic()
        cfg = OptimizerConfig(epochs=2, schedule=schedules.constant(0.1), strategy=rr())
        result = run(prob, cfg, 0)
        result.traces[0] = optimizer.EpochTrace(
            t=1, eta_t=1.0, f_val=0.0, grad_norm_sq=0.0, inner_dev_sum=0.0,
            w_tilde=np.array([4.0]),
        )
        result.traces[1] = optimizer.EpochTrace(
            t=2, eta_t=3.0, f_val=0.0, grad_norm_sq=0.0, inner_dev_sum=0.0,
            w_tilde=np.array([9.0]),
        )
        result.initial_weights = np.array([0.0])
        assert np.allclose(weighted_average_iterate(result), [3.0])

    def test_error_without_recorded_weights(self):
        prob = two_point_quadratic()
        cfg = OptimizerConfig(
            epochs=2, schedule=schedules.constant(0.1), strategy=rr(), record_weights=False
        )
        result = run(prob, cfg, 0)
        with pytest.raises(ValueError, match="not recorded"):
            weighted_average_iterate(result)


class TestAudits:
    def test_quadratic_audits_pass_with_small_steps(self):
        prob = QuadraticSC.random(30, 5, seed=4)
        consts = estimate_constants(prob, [])
        cfg = OptimizerConfig(
            epochs=20,
            schedule=schedules.constant(1.0 / (4 * consts.L_hat)),
            strategy=rr(5),
        )
        result = run(prob, cfg, 5)
        entries = audit_run(prob, consts, result)
        assert entries and all(e.applicable for e in entries)
        assert {e.check for e in entries} == {"descent", "deviation", "deviation_scvx"}
        for e in entries:
            assert e.ok, (e.check, e.epoch, e.slack)

    def test_oversized_step_skips_all_audits(self):
        prob = QuadraticSC.random(10, 3, seed=5)
        consts = estimate_constants(prob, [])
        trace = optimizer.EpochTrace(
            t=1, eta_t=2.0 / consts.L_hat, f_val=1.0, grad_norm_sq=1.0, inner_dev_sum=0.5,
            dist_sq=1.0,
        )
        entries = audit_epoch(prob, consts, (2.0, 1.0, 1.0), trace)
        assert all(not e.applicable for e in entries)
        assert all("precondition" in e.reason for e in entries)
        assert all(e.ok for e in entries)  # skipped entries never fail

    def test_logistic_descent_and_deviation_audits(self):
        ds = datasets.synthetic_classification(120, 10, seed=6)
        prob = LogisticNonconvex(ds, lam=0.01)
        g = np.random.default_rng(7)
        consts = estimate_constants(
            prob, [np.zeros(prob.d)] + [0.5 * g.standard_normal(prob.d) for _ in range(5)]
        )
        gamma = 1.0 / (consts.L_hat * math.sqrt(2 * (3 * consts.theta_hat + 2)))
        cfg = OptimizerConfig(
            epochs=15,
            schedule=schedules.preset("cuberoot_decay", gamma=gamma, beta=1.0),
            strategy=rr(6),
        )
        result = run(prob, cfg, 6)
        starts = [result.initial_weights] + [t.w_tilde for t in result.traces[:-1]]
        consts = widen_sigma_floor(consts, prob, starts)
        for e in audit_run(prob, consts, result):
            assert e.applicable and e.ok, (e.check, e.epoch, e.slack)


class TestReshuffleExpectation:
    def test_exhaustive_bounds_on_small_quadratic(self):
        prob = QuadraticSC.random(5, 2, seed=8)
        consts = estimate_constants(prob, [])
        eta = 0.8 * schedules.GOLDEN_STEP / consts.L_hat
        w = prob.w_star + np.array([1.0, -0.5])
        rep = audit_rr_expectation(prob, consts, w, eta)
        assert rep["mode"] == "exhaustive" and rep["count"] == 120
        assert rep["deviation_rr_mean"]["ok"]
        assert rep["distance_recursion_rr"]["ok"]

    def test_zero_case_at_shared_minimizer(self):
        center = np.array([2.0, 2.0])
        prob = QuadraticSC(np.ones((4, 2)), np.tile(center, (4, 1)))
        consts = estimate_constants(prob, [])
        rep = audit_rr_expectation(prob, consts, center, 0.3)
        assert rep["deviation_rr_mean"]["mean"] <= 1e-30
        assert rep["deviation_rr_mean"]["ok"]

    def test_sampling_mode_reports_standard_error(self):
        ds = datasets.synthetic_classification(20, 6, seed=9)
        prob = LogisticNonconvex(ds, lam=0.01)
        g = np.random.default_rng(10)
        w = 0.5 * g.standard_normal(prob.d)
        consts = estimate_constants(prob, [w, np.zeros(prob.d)])
        eta = 0.9 / (math.sqrt(3) * consts.L_hat)
        rep = audit_rr_expectation(prob, consts, w, eta, num_perms=200, seed=11)
        assert rep["mode"] == "sampling" and rep["count"] == 200
        ent = rep["deviation_rr_mean"]
        assert ent["se"] > 0 and ent["ok"]

    def test_sampling_mode_requires_enough_draws(self):
        ds = datasets.synthetic_classification(20, 6, seed=9)
        prob = LogisticNonconvex(ds, lam=0.01)
        consts = estimate_constants(prob, [np.zeros(prob.d)])
        with pytest.raises(ValueError, match="num_perms"):
            audit_rr_expectation(prob, consts, np.zeros(prob.d), 0.01, num_perms=10)


class TestSgdBaseline:
    def test_zero_variance_equals_full_gradient_descent(self):
        center = np.array([1.0, -1.0, 0.5])
        prob = QuadraticSC(np.tile([1.0, 2.0, 0.5], (6, 1)), np.tile(center, (6, 1)))
        sched = schedules.constant(0.1)
        result = run_sgd_baseline(prob, sched, total_iters=20, seed=0)
        w = np.zeros(3)
        for _ in range(20):
            w = w - 0.1 * prob.full_grad(w)
        assert np.allclose(result.final_weights, w)

    def test_single_component_matches_epoch_loop(self):
        prob = QuadraticSC(np.array([[1.0, 0.5]]), np.array([[2.0, -1.0]]))
        sched = schedules.constant(0.2)
        baseline = run_sgd_baseline(prob, sched, total_iters=7, seed=1)
        w = np.zeros(2)
        for _ in range(7):
            w, _, _ = run_epoch(prob, w, 0.2, np.array([0]))
        assert np.allclose(baseline.final_weights, w)

    @pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
    def test_divergence_detected(self):
        prob = QuadraticSC.random(4, 2, seed=12, eig_lo=0.5, eig_hi=1.0)
        with pytest.raises(DivergenceError):
            run_sgd_baseline(prob, schedules.constant(1e6), total_iters=2000, seed=0)

    def test_sqrt_decay_average_gradient_slope(self):
        prob = QuadraticSC.random(30, 5, seed=13)
        sched = schedules.preset("sgd_sqrt_decay", gamma=0.9 / prob.L, beta=1.0)
        result = run_sgd_baseline(prob, sched, total_iters=10_000, seed=2)
        gsq = result.series("grad_norm_sq")
        running = np.cumsum(gsq) / np.arange(1, len(gsq) + 1)
        from shufflegrad.analysis import fit_loglog_slope

        fit = fit_loglog_slope(np.arange(1, len(running) + 1), running, window=(5000, 10_000))
        assert fit.slope <= -0.35, fit.slope
