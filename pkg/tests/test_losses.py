import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lossrisk import losses as ls
from lossrisk.errors import DomainError

RHO = [ls.RhoA(1.0), ls.RhoA(-0.5), ls.RhoA(2.0), ls.RhoM(1.0), ls.RhoM(-1.0), ls.RhoM(0.5), ls.RhoB(), ls.RhoC()]
positive = st.floats(1e-3, 1e3)


class TestFirstStageExamples:
    def test_squared_error_zero(self):
        theta = np.array([1.0, -2.0, 3.5])
        assert ls.eval_first(ls.SquaredError(), theta, theta) == 0.0

    def test_poisson_normalized(self):
        assert ls.eval_first(ls.PoissonNormalized(), 2.0, 3.0) == 0.5

    def test_nb_normalized(self):
        assert ls.eval_first(ls.NBNormalized(2.0), 1.0, 4.0) == pytest.approx(3.0)

    def test_multipoisson_normalized(self):
        val = ls.eval_first(ls.MultiPoissonNormalized(), np.array([1.0, 4.0]), np.array([2.0, 2.0]))
        assert val == pytest.approx(1.0 + 1.0)

    def test_beta_composed_power(self):
        val = ls.eval_first(ls.BetaComposed(ls.Power(2.0), 2.0), np.zeros(2), np.array([1.0, 1.0]))
        assert val == pytest.approx(1.0)

    def test_entropy_scale(self):
        val = ls.eval_first(ls.EntropyScale(1.0), 2.0, 2.0 * math.e)
        assert val == pytest.approx(math.e - 2.0)

    def test_entropy_scale_near_one_keeps_precision(self):
        t = 1.0 + 1e-9
        assert ls.EntropyScale(1.0)(1.0, t) == pytest.approx(0.5e-18, rel=1e-6)

    def test_location_scale(self):
        theta = (np.array([0.0, 0.0]), 4.0)
        assert ls.LocationScale()(theta, np.array([2.0, 2.0])) == pytest.approx(2.0)
        assert ls.LocationScale(ls.Identity(), scale=3.0)(theta, np.array([2.0, 2.0])) == pytest.approx(6.0)

    def test_weighted(self):
        loss = ls.WeightedSquaredError(lambda th: 1.0 / (2.0 * th + 1.0))
        assert loss(1.0, 4.0) == pytest.approx(3.0)

    def test_batched_evaluation(self):
        theta = np.zeros(3)
        est = np.arange(12.0).reshape(4, 3)
        np.testing.assert_allclose(ls.SquaredError()(theta, est), (est**2).sum(axis=1))

    @pytest.mark.parametrize(
        "loss,theta,est",
        [
            (ls.PoissonNormalized(), 0.0, 1.0),
            (ls.NBNormalized(2.0), 0.0, 1.0),
            (ls.EntropyScale(1.0), 1.0, 0.0),
            (ls.LocationScale(), (np.zeros(2), 0.0), np.ones(2)),
        ],
    )
    def test_singularities(self, loss, theta, est):
        with pytest.raises(DomainError):
            ls.eval_first(loss, theta, est)

    @pytest.mark.parametrize(
        "loss,theta",
        [
            (ls.SquaredError(), np.array([1.0, 2.0])),
            (ls.BetaComposed(ls.Power(1.5)), np.array([1.0, 2.0])),
            (ls.PoissonNormalized(), 3.0),
            (ls.NBNormalized(2.0), 3.0),
            (ls.EntropyScale(-1.0), 3.0),
            (ls.EntropyScale(2.0), 3.0),
        ],
    )
    def test_zero_only_at_truth(self, loss, theta):
        assert float(loss(theta, theta)) == pytest.approx(0.0, abs=1e-15)
        assert float(loss(theta, np.asarray(theta) * 1.1)) > 0.0


class TestGradients:
    @pytest.mark.parametrize(
        "loss,theta,est",
        [
            (ls.PoissonNormalized(), 2.0, 3.0),
            (ls.NBNormalized(2.0), 1.5, 0.7),
            (ls.EntropyScale(1.0), 2.0, 1.2),
            (ls.EntropyScale(-1.0), 2.0, 3.1),
            (ls.WeightedSquaredError(lambda t: 1.0 / t), 2.0, 1.0),
        ],
    )
    def test_first_stage_scalar(self, loss, theta, est):
        h = 1e-6 * est
        numeric = (loss(theta, est + h) - loss(theta, est - h)) / (2 * h)
        assert float(loss.grad(theta, est)) == pytest.approx(numeric, rel=1e-6)

    def test_first_stage_vector(self):
        loss = ls.BetaComposed(ls.Power(1.5), 2.0)
        theta, est = np.array([0.5, -1.0]), np.array([1.0, 1.0])
        g = loss.grad(theta, est)
        for i in range(2):
            e = np.zeros(2)
            e[i] = 1e-6
            numeric = (loss(theta, est + e) - loss(theta, est - e)) / 2e-6
            assert g[i] == pytest.approx(numeric, rel=1e-6)

    @pytest.mark.parametrize("loss", RHO + [ls.SquaredErrorW()])
    def test_second_stage(self, loss):
        L, lhat = 2.0, 3.3
        h = 1e-6
        numeric = (loss(L, lhat + h) - loss(L, lhat - h)) / (2 * h)
        assert float(loss.grad(L, lhat)) == pytest.approx(numeric, rel=1e-6)


class TestSecondStage:
    def test_examples(self):
        assert ls.eval_second(ls.RhoB(), 3.0, 3.0) == 0.0
        assert ls.eval_second(ls.RhoM(1.0), 1.0, math.e) == pytest.approx(math.e - 2.0)
        assert ls.eval_second(ls.RhoA(2.0), 1.0, 2.0) == pytest.approx(9.0)
        assert ls.eval_second(ls.SquaredErrorW(), 1.0, -1.0) == pytest.approx(4.0)

    @pytest.mark.parametrize("loss", RHO + [ls.SquaredErrorW()])
    @given(L=positive)
    def test_zero_on_diagonal(self, loss, L):
        assert float(loss(L, L)) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("loss", RHO)
    @given(L=positive, lhat=positive, c=st.floats(1e-3, 1e3))
    def test_scale_invariance(self, loss, L, lhat, c):
        assert float(loss(c * L, c * lhat)) == pytest.approx(float(loss(L, lhat)), rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("loss", RHO + [ls.SquaredErrorW()])
    @given(L=positive, lhat=positive)
    def test_nonnegative(self, loss, L, lhat):
        assert float(loss(L, lhat)) >= 0.0

    @pytest.mark.parametrize("loss", [ls.RhoB(), ls.RhoC()])
    @given(t=st.floats(1e-3, 1e3))
    def test_symmetric_in_t(self, loss, t):
        assert float(loss(1.0, t)) == pytest.approx(float(loss(1.0, 1.0 / t)), rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("loss", RHO)
    def test_bowl_shaped(self, loss):
        grid = np.geomspace(1e-2, 1e2, 801)
        values = np.asarray(loss(1.0, grid))
        i = int(np.argmin(values))
        assert np.all(np.diff(values[: i + 1]) < 0)
        assert np.all(np.diff(values[i:]) > 0)
        assert grid[i] == pytest.approx(1.0, rel=0.02)

    @pytest.mark.parametrize("loss", RHO)
    def test_rejects_nonpositive(self, loss):
        with pytest.raises(DomainError):
            ls.eval_second(loss, 1.0, 0.0)
        with pytest.raises(DomainError):
            ls.eval_second(loss, -1.0, 1.0)

    @pytest.mark.parametrize("make", [lambda: ls.RhoA(0.0), lambda: ls.RhoM(0.0), lambda: ls.Power(0.0)])
    def test_m_zero_rejected(self, make):
        with pytest.raises(DomainError):
            make()


class TestRukhin:
    def test_examples(self):
        loss = ls.RukhinLoss(ls.Sqrt2())
        assert ls.eval_rukhin(loss, 4.0, 4.0) == pytest.approx(4.0)
        assert ls.eval_rukhin(loss, 0.0, 1.0) == pytest.approx(1.0)
        assert ls.eval_rukhin(loss, 9.0, 1.0) == pytest.approx(1.0 * 9.0 + 1.0)

    @pytest.mark.parametrize("h", [ls.Sqrt2(), ls.LogH()])
    @given(L=positive)
    def test_value_on_diagonal_is_h(self, h, L):
        assert float(ls.RukhinLoss(h)(L, L)) == pytest.approx(float(h(L)), rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("h", [ls.Sqrt2(), ls.LogH()])
    @pytest.mark.parametrize("L", [0.05, 1.0, 7.0, 300.0])
    def test_argmin_is_L(self, h, L):
        grid = np.geomspace(L / 10, L * 10, 2001)
        values = ls.RukhinLoss(h)(L, grid)
        i = int(np.argmin(values))
        step = grid[1] / grid[0]
        assert grid[i] / step <= L <= grid[i] * step

    def test_requires_positive_lhat(self):
        with pytest.raises(DomainError):
            ls.eval_rukhin(ls.RukhinLoss(), 1.0, 0.0)
        with pytest.raises(DomainError):
            ls.eval_rukhin(ls.RukhinLoss(), -1.0, 1.0)


class TestMonotoneMaps:
    def test_table_interpolates_and_extends(self):
        beta = ls.MonotoneTable([0.0, 1.0, 3.0], [0.0, 2.0, 3.0])
        np.testing.assert_allclose(beta([0.5, 2.0, 5.0]), [1.0, 2.5, 4.0])
        np.testing.assert_allclose(beta.deriv([0.5, 2.0, 5.0]), [2.0, 0.5, 0.5])

    @pytest.mark.parametrize(
        "knots,values",
        [([0.0, 1.0], [1.0, 0.5]), ([0.5, 1.0], [0.0, 1.0]), ([0.0], [0.0]), ([0.0, 1.0], [-1.0, 1.0])],
    )
    def test_table_rejects_bad_input(self, knots, values):
        with pytest.raises(DomainError):
            ls.MonotoneTable(knots, values)
