import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import kstest, multivariate_normal

from erlmix.errors import DomainError
from erlmix.special import (
    BivariateNormalParams,
    ErlangParams,
    LogNormalParams,
    bln_conditional,
    component_of,
    erlang_hazard,
    erlang_log_pdf,
    erlang_log_sf,
    lognormal_log_pdf,
    truncated_exp_sample,
    truncated_lognormal_sample,
)


def mp_log_pdf(t, m, theta):
    with mpmath.workdps(60):
        t, theta = mpmath.mpf(t), mpmath.mpf(theta)
        return float((m - 1) * mpmath.log(t) - t / theta - m * mpmath.log(theta) - mpmath.loggamma(m))


def mp_log_sf(t, m, theta):
    with mpmath.workdps(60):
        lam = mpmath.mpf(t) / mpmath.mpf(theta)
        total = mpmath.fsum(mpmath.exp(k * mpmath.log(lam) - lam - mpmath.loggamma(k + 1)) for k in range(m))
        return float(mpmath.log(total))


class TestErlangLogPdf:
    def test_exponential_at_one(self):
        assert erlang_log_pdf(1.0, ErlangParams(1, 1.0)) == pytest.approx(-1.0, abs=1e-14)

    def test_shape_two(self):
        # Ga(2 | 2, 1) = 2 e^{-2}
        assert erlang_log_pdf(2.0, ErlangParams(2, 1.0)) == pytest.approx(math.log(2.0) - 2.0, rel=1e-14)

    def test_huge_shape_matches_high_precision(self):
        got = erlang_log_pdf(5000.0, ErlangParams(10000, 0.5))
        want = mp_log_pdf(5000.0, 10000, 0.5)
        assert got == pytest.approx(want, rel=1e-8)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            erlang_log_pdf(0.0, ErlangParams(1, 1.0))
        with pytest.raises(DomainError):
            ErlangParams(0, 1.0)
        with pytest.raises(DomainError):
            ErlangParams(2, -1.0)

    def test_integrates_to_one(self):
        for m in (1, 2, 17, 500):
            for theta in (0.01, 1.0, 50.0):
                p = ErlangParams(m, theta)
                mean = m * theta
                sd = math.sqrt(m) * theta
                lo = max(mean - 25 * sd, 1e-300)
                hi = mean + 25 * sd
                val, _ = quad(lambda t: math.exp(erlang_log_pdf(t, p)), lo, hi, limit=300)
                assert val == pytest.approx(1.0, abs=1e-6)


class TestErlangLogSf:
    def test_exponential_survival(self):
        for t in (0.3, 2.0, 40.0):
            assert erlang_log_sf(t, ErlangParams(1, 2.0)) == pytest.approx(-t / 2.0, rel=1e-14)

    def test_poisson_partial_sum(self):
        # m=3, theta=1, t=2: e^{-2}(1 + 2 + 2) = 5 e^{-2}
        assert erlang_log_sf(2.0, ErlangParams(3, 1.0)) == pytest.approx(math.log(5.0) - 2.0, rel=1e-13)

    def test_matches_tail_quadrature(self):
        p = ErlangParams(400, 0.5)
        got = erlang_log_sf(250.0, p)
        val, _ = quad(lambda t: math.exp(erlang_log_pdf(t, p)), 250.0, 400.0, limit=300)
        assert got == pytest.approx(math.log(val), rel=1e-8)

    def test_deep_tail_stays_finite(self):
        # survival factors far beyond the mean underflow on the natural scale
        got = erlang_log_sf(800.0, ErlangParams(20, 0.05))
        want = mp_log_sf(800.0, 20, 0.05)
        assert math.isfinite(got)
        assert got == pytest.approx(want, rel=1e-8)

    def test_derivative_of_sf_is_minus_pdf(self):
        h = 1e-4
        for m, theta in ((1, 0.7), (3, 0.7), (20, 0.7)):
            p = ErlangParams(m, theta)
            for t in np.linspace(0.5, 15.0, 24):
                dS = (math.exp(erlang_log_sf(t + h, p)) - math.exp(erlang_log_sf(t - h, p))) / (2 * h)
                assert dS == pytest.approx(-math.exp(erlang_log_pdf(t, p)), abs=1e-6)


class TestErlangHazard:
    def test_constant_for_shape_one(self):
        for t in (0.01, 1.0, 123.0):
            assert erlang_hazard(t, ErlangParams(1, 2.0)) == pytest.approx(0.5, rel=1e-12)

    def test_shape_two_closed_form(self):
        # h(t) = t / (1 + t) for m=2, theta=1
        assert erlang_hazard(1.0, ErlangParams(2, 1.0)) == pytest.approx(0.5, rel=1e-12)
        assert erlang_hazard(3.0, ErlangParams(2, 1.0)) == pytest.approx(0.75, rel=1e-12)

    def test_monotone_nondecreasing(self):
        p = ErlangParams(5, 0.3)
        grid = np.linspace(0.1, 10.0, 200)
        vals = [erlang_hazard(t, p) for t in grid]
        assert np.all(np.diff(vals) >= -1e-12)

    def test_zero_limit_extension(self):
        assert erlang_hazard(0.0, ErlangParams(1, 4.0)) == 0.25
        assert erlang_hazard(0.0, ErlangParams(2, 4.0)) == 0.0

    def test_hazard_times_sf_equals_pdf(self):
        for m, theta in ((2, 0.5), (7, 1.3), (40, 0.1)):
            p = ErlangParams(m, theta)
            for t in np.linspace(0.2, 8.0, 17):
                lhs = erlang_hazard(t, p) * math.exp(erlang_log_sf(t, p))
                assert lhs == pytest.approx(math.exp(erlang_log_pdf(t, p)), rel=1e-12)


class TestTruncatedExp:
    def test_boundary_behavior(self):
        lo, hi = 1.0, 2.0
        at0 = truncated_exp_sample(1.0, lo, hi, 0.0)
        assert lo < at0 <= lo * (1.0 + 5e-12)
        assert truncated_exp_sample(1.0, lo, hi, 1.0 - 1e-16) == pytest.approx(hi, rel=1e-12)

    def test_untruncated_is_plain_inverse_cdf(self):
        for u in (0.1, 0.5, 0.93):
            got = truncated_exp_sample(2.5, 0.0, math.inf, u)
            assert got == pytest.approx(-2.5 * math.log1p(-u), rel=1e-13)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            truncated_exp_sample(1.0, 2.0, 2.0, 0.5)
        with pytest.raises(DomainError):
            truncated_exp_sample(-1.0, 0.0, 1.0, 0.5)

    def test_ks_against_analytic_cdf(self):
        rng = np.random.default_rng(7)
        zeta, lo, hi = 1.0, 1.0, 2.0
        draws = np.array([truncated_exp_sample(zeta, lo, hi, u) for u in rng.random(100_000)])

        def cdf(x):
            num = np.exp(-lo / zeta) - np.exp(-np.asarray(x) / zeta)
            den = math.exp(-lo / zeta) - math.exp(-hi / zeta)
            return num / den

        stat = kstest(draws, cdf).statistic
        assert stat < 1.628 / math.sqrt(draws.size)  # 99% KS band


class TestTruncatedLognormal:
    def test_untruncated_median(self):
        assert truncated_lognormal_sample(LogNormalParams(0.0, 1.0), 0.0, math.inf, 0.5) == pytest.approx(1.0, rel=1e-12)

    def test_untruncated_is_plain_inverse_cdf(self):
        from scipy.special import ndtri

        p = LogNormalParams(0.7, 0.09)
        for u in (0.05, 0.5, 0.99):
            got = truncated_lognormal_sample(p, 0.0, math.inf, u)
            assert got == pytest.approx(math.exp(0.7 + 0.3 * ndtri(u)), rel=1e-10)

    def test_ks_against_analytic_cdf(self):
        from scipy.special import ndtr

        rng = np.random.default_rng(11)
        p = LogNormalParams(1.0, 0.25)
        lo, hi = 2.0, 4.0
        draws = np.array([truncated_lognormal_sample(p, lo, hi, u) for u in rng.random(100_000)])

        def cdf(x):
            z = (np.log(np.asarray(x)) - p.mu) / p.sigma
            zlo = (math.log(lo) - p.mu) / p.sigma
            zhi = (math.log(hi) - p.mu) / p.sigma
            return (ndtr(z) - ndtr(zlo)) / (ndtr(zhi) - ndtr(zlo))

        stat = kstest(draws, cdf).statistic
        assert stat < 1.628 / math.sqrt(draws.size)


def test_truncated_samplers_stay_inside_adversarial():
    # bin-edge style intervals, extreme widths, u at both ends
    rng = np.random.default_rng(3)
    n = 500_000
    for sampler, param in (
        (lambda lo, hi, u: truncated_exp_sample(0.9, lo, hi, u), None),
        (lambda lo, hi, u: truncated_lognormal_sample(LogNormalParams(0.4, 0.8), lo, hi, u), None),
    ):
        los = np.exp(rng.uniform(-30, 8, n // 100))
        los[::7] = np.arange(1, len(los[::7]) + 1) * 0.25  # exact bin edges
        for lo in los:
            width = math.exp(rng.uniform(-12, 4))
            hi = math.inf if rng.random() < 0.2 else lo + width
            u = rng.choice([0.0, 1e-17, rng.random(), 1.0 - 1e-16])
            x = sampler(lo, hi, u)
            assert lo < x <= hi


@given(
    zeta=st.floats(1e-3, 1e3),
    lo=st.floats(0.0, 1e6),
    width=st.floats(1e-9, 1e9),
    u=st.floats(0.0, 1.0, exclude_max=True),
    unbounded=st.booleans(),
)
@settings(max_examples=300, deadline=None)
def test_truncated_exp_interval_property(zeta, lo, width, u, unbounded):
    hi = math.inf if unbounded else lo + width
    x = truncated_exp_sample(zeta, lo, hi, u)
    assert lo < x <= hi


class TestComponentOf:
    def test_spec_examples(self):
        assert component_of(0.5, 5, 1.0) == 1
        assert component_of(3.0, 5, 1.0) == 3  # right-closed edge
        assert component_of(100.0, 5, 1.0) == 5  # overflow to last bin

    def test_edge_hits_right_closed(self):
        for k in range(1, 40):
            assert component_of(k * 0.3, 100, 0.3) == k

    @given(phi=st.floats(1e-300, 1e12), M=st.integers(1, 10_000), theta=st.floats(1e-6, 1e3))
    @settings(max_examples=300, deadline=None)
    def test_capped_and_positive(self, phi, M, theta):
        b = component_of(phi, M, theta)
        assert 1 <= b <= M

    def test_monotone_in_phi(self):
        phis = np.sort(np.random.default_rng(0).uniform(0.01, 30, 500))
        bs = [component_of(p, 40, 0.7) for p in phis]
        assert np.all(np.diff(bs) >= 0)


class TestBlnConditional:
    def test_diagonal_gives_marginal(self):
        params = BivariateNormalParams(np.array([0.3, -0.2]), np.diag([1.5, 0.7]))
        cond = bln_conditional(params, 2, 5.0)
        assert cond.mu == pytest.approx(0.3)
        assert cond.sigma2 == pytest.approx(1.5)

    def test_worked_example(self):
        params = BivariateNormalParams(np.zeros(2), np.array([[1.0, 0.5], [0.5, 1.0]]))
        cond = bln_conditional(params, 2, math.e)
        assert cond.mu == pytest.approx(0.5, rel=1e-14)
        assert cond.sigma2 == pytest.approx(0.75, rel=1e-14)

    def test_swapped_index(self):
        params = BivariateNormalParams(np.array([1.0, 2.0]), np.array([[2.0, 0.6], [0.6, 1.0]]))
        cond = bln_conditional(params, 1, math.exp(1.5))
        assert cond.mu == pytest.approx(2.0 + 0.3 * (1.5 - 1.0), rel=1e-13)
        assert cond.sigma2 == pytest.approx(1.0 - 0.36 / 2.0, rel=1e-13)

    def test_joint_density_factorization(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = rng.uniform(0.5, 2.0, size=(2, 2))
            cov = a @ a.T + 0.5 * np.eye(2)
            mean = rng.uniform(-1, 1, 2)
            params = BivariateNormalParams(mean, cov)
            v1, v2 = float(rng.uniform(0.2, 5)), float(rng.uniform(0.2, 5))
            joint = multivariate_normal(mean, cov).pdf([math.log(v1), math.log(v2)]) / (v1 * v2)
            for given_index, given, other in ((2, v2, v1), (1, v1, v2)):
                cond = bln_conditional(params, given_index, given)
                marg_i = given_index - 1
                marg = LogNormalParams(float(mean[marg_i]), float(cov[marg_i, marg_i]))
                fact = math.exp(lognormal_log_pdf(given, marg)) * math.exp(lognormal_log_pdf(other, cond))
                assert fact == pytest.approx(joint, rel=1e-10)

    def test_non_pd_rejected(self):
        with pytest.raises(DomainError):
            BivariateNormalParams(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
