import math

import numpy as np
import pytest

from shufflegrad import schedules
from shufflegrad.errors import ConfigError
from shufflegrad.problems import ProblemConstants
from shufflegrad.schedules import constant, eta_at, poly, preset, validate


CONSTS = ProblemConstants(
    L_hat=1.0, theta_hat=0.5, sigma_sq_hat=1.0, mu=1.0, kappa=1.0,
    sigma_star_sq=0.5, tau=0.5, estimated=False,
)


def test_poly_rate_values():
    s = poly(gamma=1.0, beta=0.0, alpha=0.5)
    assert eta_at(s, 4) == 0.5


def test_constant_rate_is_constant():
    s = constant(0.125)
    assert eta_at(s, 1) == eta_at(s, 10**6) == 0.125


def test_epoch_index_starts_at_one():
    with pytest.raises(ValueError):
        eta_at(constant(0.1), 0)


def test_invalid_parameters_rejected():
    with pytest.raises(ConfigError):
        constant(0.0)
    with pytest.raises(ConfigError):
        poly(gamma=-1.0, beta=0.0, alpha=0.5)
    with pytest.raises(ConfigError):
        poly(gamma=1.0, beta=-0.1, alpha=0.5)
    with pytest.raises(ConfigError):
        poly(gamma=1.0, beta=0.0, alpha=1.5)


class TestPresets:
    def test_scvx_const_substitution(self):
        s = preset("scvx_const", CONSTS, T=100)
        assert math.isclose(s.eta, 6 * math.log(100) / 100)
        assert s.provenance == "scvx_const"

    def test_scvx_decay_substitution(self):
        c = ProblemConstants(L_hat=2.0, theta_hat=0.0, sigma_sq_hat=0.0, mu=2.0, kappa=1.0)
        s = preset("scvx_decay", c)
        assert (s.gamma, s.beta, s.alpha) == (3.0, 11.0, 1.0)
        assert eta_at(s, 1) == 0.25

    def test_scvx_decay_rr_convex_offset(self):
        s = preset("scvx_decay_rr_convex", CONSTS, n=10)
        assert s.beta == 1.1 and s.gamma == 2.0
        assert math.isclose(eta_at(s, 1), 2.0 / (1 + 1.1))

    def test_graddom_first_step(self):
        s = preset("graddom_decay", beta=1.0)
        assert eta_at(s, 1) == 1.0

    def test_graddom_default_offset_uses_constants(self):
        c = ProblemConstants(L_hat=5.0, theta_hat=1.0, sigma_sq_hat=1.0)
        s = preset("graddom_decay", c)
        assert math.isclose(s.beta, 2 * 5.0 * math.sqrt(2 * 5.0) - 1.0)

    def test_rr_const_variants_scale_with_n(self):
        a = preset("scvx_const_rr", CONSTS, T=50, n=100)
        b = preset("scvx_const_rr_convex", CONSTS, T=50, n=100)
        assert math.isclose(a.eta, 4 * math.log(10 * 50) / 50)
        assert math.isclose(b.eta, 2 * math.log(10 * 50) / 50)

    def test_cuberoot_const_rr_gains_cuberoot_n(self):
        a = preset("cuberoot_const", T=64, gamma=1.0)
        b = preset("cuberoot_const_rr", T=64, n=8, gamma=1.0)
        assert math.isclose(b.eta, 2.0 * a.eta)

    def test_eps_target_formula(self):
        s = preset("eps_target", CONSTS, epsilon=0.5)
        expect = math.sqrt(0.5) / (2 * 1.0 * 1.0 * math.sqrt(3 * 0.5 + 2))
        assert math.isclose(s.eta, expect)

    def test_averaged_cuberoot_decay_scales_gamma(self):
        s = preset("averaged_cuberoot_decay", n=8, gamma=0.5, beta=2.0)
        assert math.isclose(s.gamma, 1.0)
        assert s.alpha == 1.0 / 3.0

    def test_missing_constants_named(self):
        with pytest.raises(ConfigError, match="mu"):
            preset("scvx_const", ProblemConstants(1, 0, 0), T=10)
        with pytest.raises(ConfigError, match="gamma"):
            preset("cuberoot_decay", beta=1.0)
        with pytest.raises(ConfigError, match="unknown schedule preset"):
            preset("nope")


class TestValidity:
    def test_scvx_const_horizon_passes(self):
        s = preset("scvx_const", CONSTS, T=100)
        rep = validate(s, CONSTS, T=100, n=10)
        (chk,) = rep.checks
        assert math.isclose(chk.lhs, 12 * math.log(100))
        assert chk.rhs == 100 and chk.passed and rep.passed

    def test_constructed_poly_violation(self):
        # gamma L sqrt(2(3 theta + 2)) = 2 against (beta + 1)^alpha = 1
        c = ProblemConstants(L_hat=1.0, theta_hat=0.0, sigma_sq_hat=0.0)
        s = poly(gamma=1.0, beta=0.0, alpha=0.5, provenance="poly_decay")
        rep = validate(s, c, T=10, n=5)
        bad = [chk for chk in rep.checks if not chk.passed]
        assert len(bad) == 1
        assert math.isclose(bad[0].lhs, 2.0) and math.isclose(bad[0].rhs, 1.0)

    def test_boundary_equality_passes(self):
        c = ProblemConstants(L_hat=2.0, theta_hat=0.0, sigma_sq_hat=0.0)
        s = constant(1.0 / (2 * 2.0))  # custom: generic caps apply
        rep = validate(s, c, T=10, n=5)
        assert rep.passed
        assert any(chk.lhs == chk.rhs for chk in rep.checks)

    def test_validate_is_pure(self):
        s = preset("cuberoot_decay", gamma=0.3, beta=1.0)
        a = validate(s, CONSTS, T=20, n=10)
        b = validate(s, CONSTS, T=20, n=10)
        assert a == b

    def test_estimated_flag_propagates(self):
        est = ProblemConstants(L_hat=1.0, theta_hat=0.1, sigma_sq_hat=0.2)
        assert validate(constant(0.1), est, T=5, n=5).estimated
        assert not validate(constant(0.1), CONSTS, T=5, n=5).estimated

    def test_report_lines_render(self):
        s = preset("scvx_decay", CONSTS)
        lines = list(validate(s, CONSTS, T=10, n=5).lines())
        assert lines and all(l.startswith("[") for l in lines)


class TestScheduleProperties:
    @pytest.mark.parametrize(
        "sched",
        [
            poly(gamma=2.0, beta=3.0, alpha=1 / 3),
            poly(gamma=0.5, beta=0.0, alpha=1.0),
            constant(0.2),
            preset("scvx_decay", CONSTS),
        ],
    )
    def test_rates_never_increase(self, sched):
        etas = [eta_at(sched, t) for t in range(1, 200)]
        assert all(b <= a for a, b in zip(etas, etas[1:]))
        assert all(e > 0 for e in etas)
        if sched.variant == schedules.POLY and sched.alpha > 0:
            assert all(b < a for a, b in zip(etas, etas[1:]))

    def test_partial_sums_diverge_and_cubes_converge(self):
        # alpha in (1/3, 1): the rate sum grows without bound while the sum
        # of cubes is Cauchy
        for alpha in (0.4, 0.5, 0.9):
            s = poly(gamma=1.0, beta=1.0, alpha=alpha)
            etas = np.array([eta_at(s, t) for t in range(1, 200_001)])
            sums = np.cumsum(etas)
            # doubling the horizon keeps adding at least a unit chunk
            assert sums[199_999] - sums[99_999] > 1.0
            cubes = np.cumsum(etas**3)
            # every partial sum sits under the integral-comparison limit
            limit = etas[0] ** 3 + (1 + 1.0) ** (1 - 3 * alpha) / (3 * alpha - 1)
            assert cubes[-1] <= limit
            # dyadic tails shrink (Cauchy)
            tail = cubes[-1] - cubes[len(cubes) // 2]
            head_tail = cubes[20_000] - cubes[10_000]
            assert tail < head_tail
