import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from lossrisk import estimators as E
from lossrisk import losses as ls
from lossrisk import models as M
from lossrisk.errors import DomainError, UnsupportedError
from lossrisk.oracle import QuadratureSpec, oracle_bayes_loss_estimate
from lossrisk.rng import RngStream


def _normal(d, second, sigma2=1.0, prior=None):
    return E.normal_conjugate_pair(d, sigma2, prior or M.UniformPrior(), second)


def _lhat(d, second):
    return _normal(d, second).l_hat_constant


class TestNormalConjugate:
    def test_table_values_d5(self):
        assert _lhat(5, ls.SquaredErrorW()) == pytest.approx(5.0, rel=1e-14)
        assert _lhat(5, ls.RhoA(-1.0)) == pytest.approx(7.0, rel=1e-13)
        assert _lhat(5, ls.RhoA(1.0)) == pytest.approx(1.0, rel=1e-13)
        assert _lhat(5, ls.RhoB()) == pytest.approx(math.sqrt(15.0), rel=1e-14)
        expected = float(2 * mpmath.exp(mpmath.digamma(2.5)))
        assert _lhat(5, ls.RhoC()) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(4.04023888916, rel=1e-11)

    def test_rho_m_general_column(self):
        # (E L^-m)^(-1/m) for L ~ tau0^2 chi^2_d
        d, m = 7, 0.5
        lhat = _lhat(d, ls.RhoM(m))
        moment = stats.chi2(d).expect(lambda z: z ** (-m))
        assert lhat == pytest.approx(moment ** (-1 / m), rel=1e-9)

    def test_prior_shrinks_and_scales(self):
        d, s2, t2 = 3, 2.0, 6.0
        mu = np.array([1.0, 0.0, -1.0])
        pair = _normal(d, ls.RhoB(), s2, M.NormalPrior(mu, t2))
        tau0 = t2 * s2 / (t2 + s2)
        assert pair.l_hat_constant == pytest.approx(tau0 * math.sqrt(d * (d - 2)))
        x = np.array([4.0, 4.0, 4.0])
        np.testing.assert_allclose(pair.gamma_hat(x), (t2 * x + s2 * mu) / (t2 + s2))

    @pytest.mark.parametrize("d,second", [(4, ls.RhoA(1.0)), (4, ls.RhoM(2.0)), (2, ls.RhoB())])
    def test_dimension_conditions(self, d, second):
        with pytest.raises(DomainError):
            _normal(d, second)

    def test_large_dimension_does_not_overflow(self):
        assert math.isfinite(_lhat(10_000, ls.RhoA(2.0)))
        assert _lhat(10_000, ls.RhoM(-1.0)) == pytest.approx(10_000.0, rel=1e-10)

    @pytest.mark.parametrize("d", range(3, 21))
    def test_shrinkage_orderings(self, d):
        bench = float(d)
        shrinkers = [ls.RhoB(), ls.RhoC()]
        shrinkers += [ls.RhoA(m) for m in (0.1, 0.5, 1.0, 2.0, 4.0) if d > 4 * m]
        shrinkers += [ls.RhoM(m) for m in (-0.9, -0.5, -0.1, 0.1, 0.5, 1.0, 2.0, 5.0) if d > 2 * m]
        expanders = [ls.RhoA(m) for m in (-1.1, -1.5, -2.0, -5.0)] + [ls.RhoM(m) for m in (-1.1, -1.5, -2.0, -5.0)]
        for second in shrinkers:
            assert _lhat(d, second) < bench, second
        for second in expanders:
            assert _lhat(d, second) > bench, second

    @pytest.mark.parametrize("d", [3, 5, 8, 13, 20])
    def test_decreasing_in_m(self, d):
        grid = [m for m in np.linspace(-6.0, 6.0, 241) if abs(m) > 1e-9]
        for family, bound in ((ls.RhoA, 4.0), (ls.RhoM, 2.0)):
            ms = [m for m in grid if d > bound * m]
            values = [_lhat(d, family(float(m))) for m in ms]
            assert np.all(np.diff(values) < 0), family

    @pytest.mark.parametrize("d", [1, 3, 5, 10, 40])
    def test_rho_a_limit_is_rho_c(self, d):
        target = _lhat(d, ls.RhoC())
        for m in (-1e-4, 1e-4):
            assert _lhat(d, ls.RhoA(m)) == pytest.approx(target, rel=1e-3)

    @settings(max_examples=100)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
    def test_constant_over_observations(self, x):
        for second in (ls.SquaredErrorW(), ls.RhoA(0.5), ls.RhoM(-2.0), ls.RhoB(), ls.RhoC()):
            pair = _normal(4, second, 1.5, M.NormalPrior(np.zeros(4), 2.0))
            assert pair.l_hat(np.asarray(x)) == pair.l_hat_constant

    def test_batched_lhat(self):
        pair = _normal(3, ls.RhoC())
        out = pair.l_hat(np.zeros((7, 3)))
        assert out.shape == (7,)
        assert np.all(out == pair.l_hat_constant)


class TestPoisson:
    def test_examples(self):
        pair = E.poisson_pair(3, 1)
        assert pair(4) == (3.0, 0.5)
        improper = E.poisson_pair(1, 0)
        assert improper.gamma_hat(7) == 7.0
        assert improper.l_hat_constant == 1.0
        assert E.poisson_pair(5, 1).l_hat_constant == E.poisson_pair(3, 1).l_hat_constant == 0.5

    @pytest.mark.parametrize("a,b", [(2.0, 1.0), (1.0, 1.0), (3.0, -1.0)])
    def test_domain(self, a, b):
        with pytest.raises(DomainError):
            E.poisson_pair(a, b)

    @settings(max_examples=100)
    @given(st.integers(0, 10**6))
    def test_constant(self, x):
        pair = E.poisson_pair(4.5, 2.0)
        assert pair.l_hat(x) == pair.l_hat_constant


class TestMultiPoisson:
    def test_unbiased_choice(self):
        pair = E.multipoisson_pair(2, 2, 0)
        gamma, lhat = pair(np.array([1, 2]))
        np.testing.assert_allclose(gamma, [1.0, 2.0])
        assert lhat == pytest.approx(2.0)

    @pytest.mark.parametrize("z", [0, 1, 2, 5, 100, 10**9])
    def test_d3_a3_b1(self, z):
        pair = E.multipoisson_pair(3, 3, 1)
        x = np.array([z, 0, 0])
        assert pair.l_hat(x) == pytest.approx(1.5, rel=1e-14)

    @pytest.mark.parametrize("a,b", [(1.0, 0.0), (3.0, 1.0), (4.5, 0.25)])
    def test_d1_matches_poisson(self, a, b):
        multi = E.multipoisson_pair(1, a, b)
        uni = E.poisson_pair(a, b)
        for x in range(0, 40):
            xv = np.array([x])
            assert multi.gamma_hat(xv)[0] == pytest.approx(uni.gamma_hat(x), rel=1e-14)
            assert multi.l_hat(xv) == pytest.approx(uni.l_hat(x), rel=1e-14)

    def test_all_zero_d1_a1(self):
        pair = E.multipoisson_pair(1, 1, 0)
        assert pair.gamma_hat(np.array([0]))[0] == 0.0

    def test_general_formula(self):
        d, a, b = 4, 1.5, 0.5
        pair = E.multipoisson_pair(d, a, b)
        x = np.array([3, 0, 1, 7])
        z = x.sum()
        assert pair.l_hat(x) == pytest.approx((d * z + a * (d - 1)) / ((b + 1) * (z + d - 1)), rel=1e-14)
        np.testing.assert_allclose(pair.gamma_hat(x), x * (a + z - 1) / ((b + 1) * (z + d - 1)), rtol=1e-14)
        assert pair.l_hat_constant is None

    def test_large_counts_exact(self):
        d, a, b = 3, 1.0, 0.0
        pair = E.multipoisson_pair(d, a, b)
        z = 10**15
        exact = (d * z + a * (d - 1)) / (z + d - 1)
        assert pair.l_hat(np.array([z, 0, 0])) == pytest.approx(exact, rel=1e-15)

    def test_batched(self):
        pair = E.multipoisson_pair(2, 1.0, 0.0)
        x = np.array([[1, 2], [0, 0], [5, 5]])
        assert pair.l_hat(x).shape == (3,)
        assert pair.gamma_hat(x).shape == (3, 2)

    def test_domain(self):
        with pytest.raises(DomainError):
            E.multipoisson_pair(2, 0.5, 0.0)


class TestNegBinomial:
    def test_examples(self):
        assert E.negbinomial_pair(2, 2, 1)(5) == (3.0, 0.25)
        pair = E.negbinomial_pair(3.0, 1, 0)
        assert pair.gamma_hat(8) == pytest.approx(6.0)
        assert pair.l_hat_constant == pytest.approx(0.25)
        assert pair.gamma_hat(0) == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            E.negbinomial_pair(0.0, 1, 0)


class TestGammaPair:
    def test_example(self):
        pair = E.gamma_pair(3.0, 0.0, 0.0, 1.0)
        assert pair.gamma_hat(4.0) == pytest.approx(0.5)
        expected = float(mpmath.digamma(3) - mpmath.log(2))
        assert pair.l_hat_constant == pytest.approx(expected, rel=1e-13)
        assert expected == pytest.approx(0.22963, abs=1e-5)

    def test_small_m_limit(self):
        assert abs(E.gamma_pair(3.0, 1.0, 1.0, 1e-6).l_hat_constant) < 1e-5

    def test_free_of_b(self):
        assert E.gamma_pair(3, 1, 5, 1).l_hat_constant == E.gamma_pair(3, 1, 9, 1).l_hat_constant

    @pytest.mark.parametrize("m", [4.0, 5.0, 0.0])
    def test_domain(self, m):
        with pytest.raises(DomainError):
            E.gamma_pair(3.0, 1.0, 1.0, m)


class TestExpLocation:
    def test_examples(self):
        assert E.explocation_pair(3, 2.0).l_hat_constant == pytest.approx(0.5 - math.log(1.5), rel=1e-14)
        assert E.explocation_pair(3, 1.0).l_hat_constant == pytest.approx(1 - math.log(2), rel=1e-14)
        assert E.explocation_pair(3, 1e6).l_hat_constant < 1e-11
        assert E.explocation_pair(3, 2.0).gamma_hat(np.array([5.0, 3.0, 9.0])) == pytest.approx(2.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            E.explocation_pair(3, 0.0)


class TestNormalUnknownVar:
    def test_constant(self):
        assert E.normal_unknownvar_pair(3, 5, np.zeros(3), 1.0, 2.0, 1.0).l_hat_constant == pytest.approx(0.5)

    def test_prior_dominates(self):
        xi = np.array([1.0, -2.0])
        pair = E.normal_unknownvar_pair(2, 3, xi, 1e12, 2.0, 1.0)
        est = pair.gamma_hat(M.NormalSufficient(np.array([50.0, 50.0]), 4.0))
        np.testing.assert_allclose(est, xi, atol=1e-9)

    def test_posterior_law_is_scaled_chi2(self):
        d, n, c = 3, 5, 1.0
        model, prior = M.NormalUnknownVar(d, n), M.NormalGammaPrior(np.zeros(d), c, 2.0, 1.0)
        x = M.NormalSufficient(np.array([0.4, 1.0, -3.0]), 7.0)
        samples = E.posterior_loss_sampler(model, prior, x, ls.LocationScale(), RngStream(3), 100_000)
        assert stats.kstest(samples * (n + c), stats.chi2(d).cdf).pvalue > 1e-3


class TestNormalMinimax:
    @pytest.mark.parametrize("d,q,m", [(5, 1.0, 0.5), (5, 2.0, 0.5), (10, 2.0, 1.5), (3, 1.0, -1.0), (7, 0.5, 2.0)])
    def test_power_rho_m(self, d, q, m):
        sol = E.normal_minimax(d, ls.Power(q), ls.RhoM(m))
        expected = 2**q * math.exp((special.gammaln(d / 2) - special.gammaln(d / 2 - m * q)) / m)
        assert sol.pair.l_hat_constant == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 5, 11])
    def test_identity_mean(self, d):
        assert E.normal_minimax(d, ls.Identity(), ls.RhoM(-1.0)).pair.l_hat_constant == pytest.approx(d)

    def test_power2_second_moment(self):
        assert E.normal_minimax(5, ls.Power(2.0), ls.RhoM(-1.0)).pair.l_hat_constant == pytest.approx(35.0)

    def test_matches_conjugate_table(self):
        for second in (ls.RhoA(1.0), ls.RhoB(), ls.RhoC(), ls.RhoM(0.5), ls.SquaredErrorW()):
            sol = E.normal_minimax(6, ls.Identity(), second)
            assert sol.pair.l_hat_constant == pytest.approx(_lhat(6, second), rel=1e-10)

    def test_monotone_table_close_to_identity(self):
        table = ls.MonotoneTable(np.linspace(0.0, 200.0, 2001), np.linspace(0.0, 200.0, 2001))
        a = E.normal_minimax(5, table, ls.RhoB()).pair.l_hat_constant
        b = E.normal_minimax(5, ls.Identity(), ls.RhoB()).pair.l_hat_constant
        assert a == pytest.approx(b, rel=1e-6)

    def test_risk_rho_m(self):
        # mE log beta(Z) + log E beta(Z)^-m
        d, m = 6, 0.5
        sol = E.normal_minimax(d, ls.Identity(), ls.RhoM(m))
        elog = special.digamma(d / 2) + math.log(2.0)
        emom = 2 ** (-m) * math.exp(special.gammaln(d / 2 - m) - special.gammaln(d / 2))
        assert sol.risk_bar == pytest.approx(m * elog + math.log(emom), rel=1e-10)

    def test_prior_sequence(self):
        sol = E.normal_minimax(3, ls.Identity(), ls.RhoC(), sigma2=2.0)
        assert sol.prior_sequence[5].tau2 == 10.0
        with pytest.raises(DomainError):
            sol.prior_sequence[0]

    @pytest.mark.parametrize("d,q,second", [(3, 2.0, ls.RhoM(0.75)), (4, 1.0, ls.RhoA(1.0)), (2, 1.0, ls.RhoB())])
    def test_moment_condition(self, d, q, second):
        with pytest.raises(DomainError):
            E.normal_minimax(d, ls.Power(q), second)


class TestGammaMinimax:
    def test_matches_gamma_pair(self):
        for alpha, m in [(3.0, 1.0), (5.0, -2.0), (2.5, 0.5)]:
            sol = E.gamma_minimax(alpha, m)
            assert sol.pair.l_hat_constant == E.gamma_pair(alpha, 0.0, 0.0, m).l_hat_constant

    def test_domain(self):
        with pytest.raises(DomainError):
            E.gamma_minimax(2.0, 1.0)

    def test_prior_sequence(self):
        prior = E.gamma_minimax(3.0, 1.0).prior_sequence[4]
        assert (prior.a, prior.b) == (0.25, 0.25)


class TestRukhinSolution:
    def test_normal(self):
        sol = E.rukhin_solution(M.NormalKnownVar(4))
        assert sol.pair.l_hat_constant == pytest.approx(4.0, rel=1e-14)
        assert sol.risk_bar == pytest.approx(4.0)

    def test_negbinomial(self):
        sol = E.rukhin_solution(M.NegBinomial(3.0))
        assert sol.pair(8) == (6.0, 0.25)

    def test_multipoisson(self):
        sol = E.rukhin_solution(M.MultiPoisson(2))
        g, lhat = sol.pair(np.array([3, 1]))
        np.testing.assert_array_equal(g, [3.0, 1.0])
        assert lhat == 2.0

    def test_gamma(self):
        sol = E.rukhin_solution(M.GammaModel(3.0), m=1.0)
        assert sol.pair.gamma_hat(4.0) == pytest.approx(0.5)
        assert sol.risk_bar == pytest.approx(2 * math.sqrt(sol.pair.l_hat_constant))

    def test_log_h(self):
        sol = E.rukhin_solution(M.NormalKnownVar(3), ls.LogH())
        assert sol.risk_bar == pytest.approx(math.log(3.0))

    def test_unsupported(self):
        with pytest.raises(UnsupportedError):
            E.rukhin_solution(M.PoissonModel())
        with pytest.raises(DomainError):
            E.rukhin_solution(M.GammaModel(3.0))


class TestPosteriorLossSampler:
    def test_normal_scaled_chi2(self):
        d, s2, t2 = 4, 1.0, 3.0
        tau0 = t2 * s2 / (t2 + s2)
        samples = E.posterior_loss_sampler(
            M.NormalKnownVar(d, s2), M.NormalPrior(np.zeros(d), t2), np.full(d, 2.0), ls.SquaredError(), RngStream(1), 1_000_000
        )
        assert abs(samples.mean() - d * tau0) <= 4 * samples.std() / 1000.0

    def test_explocation_law(self):
        a, n = 2.0, 3
        samples = E.posterior_loss_sampler(
            M.ExpLocation(n), M.GammaPrior(a, n), np.array([1.0, 4.0, 2.0]), ls.EntropyScale(-1.0), RngStream(2), 1_000_000
        )
        expected = 1 / a - math.log1p(1 / a)
        assert abs(samples.mean() - expected) <= 4 * samples.std() / 1000.0
        u = np.random.default_rng(0).beta(a, 1.0, 200_000)
        reference = (a + 1) / a * u - np.log(u) - math.log1p(1 / a) - 1
        assert stats.ks_2samp(samples[:200_000], reference).pvalue > 1e-3

    def test_rejects_bad_count(self):
        with pytest.raises(DomainError):
            E.posterior_loss_sampler(M.PoissonModel(), M.GammaPrior(1, 1), 2, ls.PoissonNormalized(), RngStream(1), 0)

    def test_unsupported_pair(self):
        with pytest.raises(UnsupportedError):
            E.posterior_loss_sampler(M.PoissonModel(), M.GammaPrior(1, 1), 2, ls.NBNormalized(1.0), RngStream(1), 10)


def _random_x(seed, low, high, size=5, integer=True):
    gen = np.random.default_rng(seed)
    return gen.integers(low, high, size) if integer else gen.uniform(low, high, size)


QUAD_CASES = [
    ("poisson", M.PoissonModel(), M.GammaPrior(3.0, 1.0), ls.PoissonNormalized(), E.poisson_pair(3.0, 1.0), _random_x(1, 0, 40)),
    ("poisson-improper", M.PoissonModel(), M.UniformPrior(), ls.PoissonNormalized(), E.poisson_pair(1.0, 0.0), _random_x(2, 1, 40)),
    ("negbinomial", M.NegBinomial(2.0), M.BetaIIPrior(2.0, 1.0, 2.0), ls.NBNormalized(2.0), E.negbinomial_pair(2.0, 2.0, 1.0), _random_x(3, 0, 40)),
    ("negbinomial-improper", M.NegBinomial(3.0), M.ImproperBetaIIPrior(3.0), ls.NBNormalized(3.0), E.negbinomial_pair(3.0, 1.0, 0.0), _random_x(4, 1, 40)),
    ("gamma", M.GammaModel(3.0), M.GammaPrior(1.5, 2.0), ls.EntropyScale(1.0), E.gamma_pair(3.0, 1.5, 2.0, 1.0), _random_x(5, 0.05, 20.0, integer=False)),
    ("gamma-improper", M.GammaModel(4.0), M.InverseScalePrior(), ls.EntropyScale(-2.0), E.gamma_pair(4.0, 0.0, 0.0, -2.0), _random_x(6, 0.05, 20.0, integer=False)),
]


@pytest.mark.slow
@pytest.mark.parametrize("name,model,prior,first,pair,xs", QUAD_CASES, ids=[c[0] for c in QUAD_CASES])
def test_oracle_equality_quadrature(name, model, prior, first, pair, xs):
    for x in xs:
        oracle = oracle_bayes_loss_estimate(model, prior, x, first, ls.SquaredErrorW(), QuadratureSpec())
        assert oracle.value == pytest.approx(float(pair.l_hat(x)), rel=1e-6), x


@pytest.mark.slow
def test_oracle_equality_explocation():
    n, a = 3, 2.0
    pair = E.explocation_pair(n, a)
    gen = np.random.default_rng(7)
    for _ in range(5):
        x = gen.uniform(0.1, 30.0, n)
        oracle = oracle_bayes_loss_estimate(M.ExpLocation(n), M.GammaPrior(a, n), x, ls.EntropyScale(-1.0), ls.SquaredErrorW())
        assert oracle.value == pytest.approx(pair.l_hat_constant, rel=1e-6)
