import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import roots_hermite

from utils.errors import AccuracyError, DomainError
from utils.numerics import (
    MAX_HERMITE_ORDER,
    SQRT_PI,
    adaptive_integrate,
    binomial_series_tail,
    db_to_linear,
    fit_diversity_slope,
    gauss_hermite,
    harmonic_numbers,
    linear_to_db,
    log_gamma,
    log_q_function,
    power_exp_integral,
    q_function,
)


class TestQFunction:
    def test_known_values(self):
        assert q_function(0.0) == pytest.approx(0.5, abs=1e-15)
        assert q_function(2.0) == pytest.approx(0.0227501319481792, rel=1e-12)
        assert q_function(-10.0) > 1 - 1e-15

    def test_array_input(self):
        values = q_function(np.array([-1.0, 0.0, 1.0]))
        assert values.shape == (3,)
        assert np.all(np.diff(values) < 0)

    @pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(DomainError):
            q_function(bad)

    @given(st.floats(min_value=-30, max_value=30, allow_nan=False))
    def test_symmetry(self, x):
        assert q_function(x) + q_function(-x) == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(min_value=-5, max_value=5, allow_nan=False))
    def test_log_matches_q(self, x):
        assert math.exp(log_q_function(x)) == pytest.approx(q_function(x), rel=1e-12)

    def test_log_deep_tail_finite(self):
        # Q(40) underflows but its log does not
        assert q_function(40.0) == 0.0
        assert log_q_function(40.0) == pytest.approx(-804.608, rel=1e-4)


class TestHarmonicNumbers:
    @pytest.mark.parametrize("k, h, l", [(1, 1.0, 1.0), (2, 1.5, 1.25), (3, 11 / 6, 49 / 36)])
    def test_small_values(self, k, h, l):
        pair = harmonic_numbers(k)
        assert pair.k == k
        assert pair.h_k == pytest.approx(h, abs=1e-15)
        assert pair.l_k == pytest.approx(l, abs=1e-15)

    def test_126_matches_direct_sum(self):
        # the k used by SF=7 with J=2
        expected = math.fsum(1.0 / q for q in range(1, 127))
        assert harmonic_numbers(126).h_k == pytest.approx(expected, rel=1e-14)
        assert harmonic_numbers(126).h_k == pytest.approx(5.4175, abs=1e-3)

    @pytest.mark.parametrize("bad", [0, -3, 2.5])
    def test_rejects_non_positive(self, bad):
        with pytest.raises(DomainError):
            harmonic_numbers(bad)

    @given(st.integers(min_value=1, max_value=3000))
    @settings(max_examples=50)
    def test_additive_and_bounded(self, k):
        step = harmonic_numbers(k + 1).h_k - harmonic_numbers(k).h_k
        assert step == pytest.approx(1.0 / (k + 1), rel=1e-9)
        assert harmonic_numbers(k).l_k < math.pi ** 2 / 6


class TestGaussHermite:
    def test_order_one(self):
        rule = gauss_hermite(1)
        assert rule.nodes.tolist() == [0.0]
        assert rule.weights[0] == pytest.approx(SQRT_PI, rel=1e-14)

    def test_order_two(self):
        rule = gauss_hermite(2)
        np.testing.assert_allclose(rule.nodes, [-1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-14)
        np.testing.assert_allclose(rule.weights, [SQRT_PI / 2, SQRT_PI / 2], rtol=1e-13)

    @pytest.mark.parametrize("order", [3, 10, 30, 64, 128])
    def test_rule_invariants(self, order):
        rule = gauss_hermite(order)
        assert np.all(np.diff(rule.nodes) > 0)
        np.testing.assert_allclose(rule.nodes, -rule.nodes[::-1], atol=1e-12)
        assert rule.weights.sum() == pytest.approx(SQRT_PI, abs=1e-10)
        assert rule.integrate(lambda x: x ** 2) == pytest.approx(SQRT_PI / 2, abs=1e-8)
        assert np.all(rule.weights > 0)

    def test_every_order_matches_scipy(self):
        for order in range(1, MAX_HERMITE_ORDER + 1):
            rule = gauss_hermite(order)
            nodes, weights = roots_hermite(order)
            np.testing.assert_allclose(rule.nodes, nodes, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(rule.weights, weights, rtol=1e-12, atol=0)
            assert rule.weights.sum() == pytest.approx(SQRT_PI, rel=1e-10)

    @pytest.mark.parametrize("order", [4, 9, 20])
    def test_polynomial_exactness(self, order):
        rule = gauss_hermite(order)
        for m in range(0, 2 * order):
            exact = 0.0 if m % 2 else math.gamma((m + 1) / 2)
            value = rule.integrate(lambda x, m=m: x ** m)
            assert value == pytest.approx(exact, rel=1e-8, abs=1e-10)

    def test_cos_against_adaptive(self):
        rule = gauss_hermite(30)
        reference = adaptive_integrate(lambda x: math.exp(-x * x) * math.cos(x), -math.inf, math.inf)
        assert rule.integrate(np.cos) == pytest.approx(reference, abs=1e-10)
        assert reference == pytest.approx(SQRT_PI * math.exp(-0.25), rel=1e-10)

    def test_cached_and_read_only(self):
        rule = gauss_hermite(30)
        assert gauss_hermite(30) is rule
        with pytest.raises(ValueError):
            rule.nodes[0] = 1.0

    @pytest.mark.parametrize("bad", [0, 129, 3.5])
    def test_order_range(self, bad):
        with pytest.raises(DomainError):
            gauss_hermite(bad)


class TestAdaptiveIntegrate:
    def test_exponential(self):
        assert adaptive_integrate(lambda x: math.exp(-x), 0.0, math.inf) == pytest.approx(1.0, rel=1e-10)

    def test_gamma_two(self):
        assert adaptive_integrate(lambda x: x * math.exp(-x), 0.0, math.inf) == pytest.approx(1.0, rel=1e-10)

    def test_whole_line(self):
        value = adaptive_integrate(lambda x: math.exp(-x * x), -math.inf, math.inf)
        assert value == pytest.approx(SQRT_PI, rel=1e-10)

    def test_reversed_limits(self):
        assert adaptive_integrate(lambda x: x, 1.0, 0.0) == pytest.approx(-0.5, rel=1e-12)

    def test_empty_interval(self):
        assert adaptive_integrate(lambda x: 1.0, 2.0, 2.0) == 0.0

    def test_nan_limit(self):
        with pytest.raises(DomainError):
            adaptive_integrate(lambda x: x, math.nan, 1.0)

    def test_non_convergence_carries_estimate(self):
        def wild(x):
            return math.sin(1.0 / x) / x if x > 0 else 0.0

        with pytest.raises(AccuracyError) as info:
            adaptive_integrate(wild, 0.0, 1.0, tol=1e-12)
        assert info.value.best_estimate is not None


class TestSmallHelpers:
    @pytest.mark.parametrize("x, expected", [(1, 0.0), (2, 0.0), (5, math.log(24))])
    def test_log_gamma(self, x, expected):
        assert log_gamma(x) == pytest.approx(expected, abs=1e-14)

    def test_log_gamma_factorials(self):
        for n in range(1, 21):
            assert math.exp(log_gamma(n)) == pytest.approx(math.factorial(n - 1), rel=1e-13)

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_log_gamma_domain(self, bad):
        with pytest.raises(DomainError):
            log_gamma(bad)

    @pytest.mark.parametrize("n", [0, 1, 3, 7])
    @pytest.mark.parametrize("rate", [0.5, 1.0, 2.5])
    def test_power_exp_integral(self, n, rate):
        full = power_exp_integral(n, rate, 0.0, math.inf)
        assert full == pytest.approx(math.factorial(n) / rate ** (n + 1), rel=1e-12)
        split = power_exp_integral(n, rate, 0.0, 1.3) + power_exp_integral(n, rate, 1.3, math.inf)
        assert split == pytest.approx(full, rel=1e-12)
        numeric = adaptive_integrate(lambda x: x ** n * math.exp(-rate * x), 0.2, 3.0)
        assert power_exp_integral(n, rate, 0.2, 3.0) == pytest.approx(numeric, rel=1e-10)

    def test_binomial_series_tail_matches_direct_form(self):
        for mu in (0.1, 0.5, 0.9):
            for order in (1, 2, 4, 8):
                k = np.arange(order)
                direct = 0.5 * (1 - mu * np.sum(
                    [math.comb(2 * i, i) * ((1 - mu * mu) / 4) ** i for i in k]
                ))
                assert binomial_series_tail(mu, order) == pytest.approx(direct, rel=1e-10)

    def test_binomial_series_tail_edges(self):
        assert binomial_series_tail(0.0, 1) == pytest.approx(0.5)
        assert binomial_series_tail(1.0, 3) == 0.0
        with pytest.raises(DomainError):
            binomial_series_tail(1.5, 2)

    def test_binomial_series_tail_is_fading_average(self):
        # E[Q(sqrt(2 g X))] over X ~ Gamma(L, 1) with mu = sqrt(g / (1 + g))
        g, order = 3.0, 2
        numeric = adaptive_integrate(
            lambda x: q_function(math.sqrt(2 * g * x)) * x * math.exp(-x), 0.0, math.inf
        )
        assert binomial_series_tail(math.sqrt(g / (1 + g)), order) == pytest.approx(numeric, rel=1e-8)

    def test_fit_diversity_slope_power_law(self):
        snr_db = np.arange(10.0, 31.0, 2.0)
        ber = 0.3 * db_to_linear(snr_db) ** -2
        assert fit_diversity_slope(snr_db, ber) == pytest.approx(2.0, abs=1e-6)

    def test_fit_diversity_slope_rejects_zero(self):
        with pytest.raises(DomainError):
            fit_diversity_slope([0.0, 1.0], [0.1, 0.0])

    def test_db_round_trip(self):
        assert db_to_linear(10.0) == pytest.approx(10.0)
        assert linear_to_db(100.0) == pytest.approx(20.0)
        with pytest.raises(DomainError):
            linear_to_db(0.0)
