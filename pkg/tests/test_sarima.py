
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from simulate import simulate_arma

from loadcast import sarima
from loadcast.exceptions import (
    InsufficientData,
    InvalidOrder,
    InvalidSpacing,
    NoFeasibleModel,
)
from loadcast.sarima import (
    SarimaForecaster,
    SarimaModel,
    SarimaOrder,
    aic,
    auto_tune,
    difference,
    fit,
    forecast,
    grid_search,
    load_model,
    save_model,
    season_length,
    undifference,
)
from loadcast.series import TimeSeries


class TestOrder:
    def test_seasonal_needs_m(self):
        with pytest.raises(InvalidOrder):
            SarimaOrder(P=1, m=1)

    def test_over_differencing(self):
        with pytest.raises(InvalidOrder):
            SarimaOrder(d=2, D=1, m=4)

    def test_from_tuple(self):
        assert SarimaOrder.from_tuple((1, 0, 1, 3, 0, 3), m=72).as_tuple() == (1, 0, 1, 3, 0, 3, 72)
        assert str(SarimaOrder(1, 0, 1, 2, 0, 1, 24)) == "SARIMA(1,0,1)(2,0,1)[24]"

    def test_reference_orders(self):
        assert sarima.DEFAULT_ORDER == (1, 0, 1, 3, 0, 3)
        assert sarima.GRID_SEARCH_ORDER == (1, 0, 1, 2, 0, 1)


class TestSeasonLength:
    @pytest.mark.parametrize("spacing,m", [(60, 24), (20, 72), (1440, 1), (1, 1440)])
    def test_points_per_day(self, spacing, m):
        assert season_length(spacing) == m

    @pytest.mark.parametrize("spacing", [7, 0, -20, 2880])
    def test_invalid(self, spacing):
        with pytest.raises(InvalidSpacing):
            season_length(spacing)


class TestDifference:
    def test_first(self):
        np.testing.assert_array_equal(difference([1, 2, 4], 1, 0), [1, 2])

    def test_seasonal(self):
        np.testing.assert_array_equal(difference([1, 2, 3, 4], 0, 1, 2), [2, 2])

    def test_identity(self):
        np.testing.assert_array_equal(difference([3, 1, 4], 0, 0), [3, 1, 4])

    def test_too_short(self):
        with pytest.raises(InsufficientData):
            difference([1, 2, 3], 0, 1, 3)

    @given(
        st.lists(st.floats(-100, 100), min_size=12, max_size=40),
        st.lists(st.floats(-100, 100), min_size=12, max_size=40),
        st.floats(-5, 5),
        st.floats(-5, 5),
        st.integers(0, 1),
        st.integers(0, 1),
    )
    def test_linear(self, x, y, a, b, d, D):
        n = min(len(x), len(y))
        x, y = np.asarray(x[:n]), np.asarray(y[:n])
        lhs = difference(a * x + b * y, d, D, 3)
        rhs = a * difference(x, d, D, 3) + b * difference(y, d, D, 3)
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    @given(
        st.lists(st.integers(-1000, 1000), min_size=15, max_size=40),
        st.integers(0, 2),
        st.integers(0, 1),
        st.integers(2, 5),
    )
    def test_undifference_recovers(self, values, d, D, m):
        if d + D > 2:
            return
        y = np.asarray(values, dtype=float)
        n0 = d + D * m
        w = difference(y, d, D, m)
        np.testing.assert_array_equal(undifference(w, y[:n0], d, D, m), y)


class TestFit:
    def test_ar1_recovery(self):
        y = simulate_arma(2000, phi=[0.8], seed=11)
        model = fit(y, SarimaOrder(p=1))
        assert 0.72 <= model.ar[0] <= 0.88

    def test_white_noise(self):
        y = simulate_arma(2000, seed=12)
        model = fit(y, SarimaOrder(p=1))
        assert abs(model.ar[0]) <= 0.1

    def test_ma1_recovery(self):
        y = simulate_arma(2000, theta=[0.5], seed=13)
        model = fit(y, SarimaOrder(q=1))
        assert 0.4 <= model.ma[0] <= 0.6

    def test_intercept_from_mean(self):
        y = simulate_arma(1000, phi=[0.5], seed=14)
        model = fit(y, SarimaOrder(p=1))
        assert model.mean == pytest.approx(y.mean(), rel=1e-12)
        assert model.intercept == pytest.approx(y.mean() * (1 - model.ar[0]), rel=1e-12)

    def test_deterministic(self):
        y = simulate_arma(600, phi=[0.6], theta=[0.3], seed=15)
        a = fit(y, SarimaOrder(p=1, q=1))
        b = fit(y, SarimaOrder(p=1, q=1))
        np.testing.assert_array_equal(np.r_[a.ar, a.ma], np.r_[b.ar, b.ma])
        assert a.loglike == b.loglike

    def test_root_conditions_hold(self):
        y = simulate_arma(1000, phi=[0.5, 0.3], theta=[0.4], sphi=[0.5], m=12, seed=16)
        model = fit(y, SarimaOrder(p=2, q=1, P=1, Q=1, m=12))
        assert model.satisfies_root_conditions()
        assert model.noise_variance > 0

    def test_near_unit_root_stays_stationary(self):
        y = np.cumsum(np.random.default_rng(17).normal(size=800)) + 50
        model = fit(y, SarimaOrder(p=1))
        assert abs(model.ar[0]) < 1

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            fit(np.arange(15.0), SarimaOrder(p=1))

    def test_differenced_model(self):
        y = np.cumsum(simulate_arma(800, phi=[0.5], seed=18, level=0.0)) * 0.1 + 50
        model = fit(y, SarimaOrder(p=1, d=1))
        assert 0.35 <= model.ar[0] <= 0.65
        assert model.tail.size == 2


class TestStepDown:
    def test_agrees_with_numpy_roots(self):
        rng = np.random.default_rng(0)
        for _ in range(5000):
            k = int(rng.integers(1, 5))
            coefs = rng.uniform(-1.5, 1.5, k)
            sign = float(rng.choice([-1.0, 1.0]))
            roots = np.roots(np.r_[1.0, sign * coefs][::-1])
            expected = bool(np.all(np.abs(roots) > 1 + 1e-6))
            assert sarima._roots_outside(coefs, sign) == expected


class TestForecast:
    def test_ar1_closed_form(self):
        model = SarimaModel.from_coefficients((1, 0, 0, 0, 0, 0, 1), ar=[0.5], tail=[10.0])
        np.testing.assert_allclose(forecast(model, 3), [5.0, 2.5, 1.25], rtol=0, atol=1e-12)

    def test_ma1_memory(self):
        model = SarimaModel.from_coefficients(
            (0, 0, 1, 0, 0, 0, 1), intercept=30.0, ma=[0.6], resid=[4.0]
        )
        out = forecast(model, 5)
        assert out[0] == pytest.approx(30.0 + 0.6 * 4.0)
        np.testing.assert_array_equal(out[1:], 30.0)

    def test_seasonal_ar_hand_recursion(self):
        history = [10.0, 20.0, 30.0, 40.0]
        model = SarimaModel.from_coefficients(
            (0, 0, 0, 1, 0, 0, 4), seasonal_ar=[0.9], tail=history
        )
        expected = list(history)
        for _ in range(8):
            expected.append(0.9 * expected[-4])
        np.testing.assert_allclose(forecast(model, 8), expected[4:], atol=1e-12)

    def test_clip_only_at_output(self):
        model = SarimaModel.from_coefficients((1, 0, 0, 0, 0, 0, 1), ar=[-0.9], tail=[100.0])
        raw = forecast(model, 4, clip=False)
        np.testing.assert_allclose(raw, [-90.0, 81.0, -72.9, 65.61])
        np.testing.assert_allclose(forecast(model, 4), np.clip(raw, 0, 100))

    def test_undifferences_against_tail(self):
        model = SarimaModel.from_coefficients((0, 1, 0, 0, 0, 0, 1), intercept=2.0, tail=[40.0])
        np.testing.assert_allclose(forecast(model, 3), [42.0, 44.0, 46.0])

    def test_seasonal_difference(self):
        model = SarimaModel.from_coefficients(
            (0, 0, 0, 0, 1, 0, 3), tail=[10.0, 20.0, 30.0]
        )
        np.testing.assert_allclose(forecast(model, 6), [10, 20, 30, 10, 20, 30])

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000), st.floats(-0.9, 0.9))
    def test_ar1_converges_monotonically(self, seed, phi):
        y = simulate_arma(300, phi=[phi], seed=seed)
        model = fit(y, SarimaOrder(p=1))
        gaps = np.abs(forecast(model, 30, clip=False) - model.mean)
        assert np.all(np.diff(gaps) <= 1e-12)


class TestAic:
    def _model(self, loglike, order):
        return SarimaModel(
            order=order,
            intercept=0.0,
            ar=np.zeros(order.p),
            ma=np.zeros(order.q),
            seasonal_ar=np.zeros(order.P),
            seasonal_ma=np.zeros(order.Q),
            noise_variance=1.0,
            loglike=loglike,
            tail=np.zeros(order.n_diff + order.ar_span),
            resid=np.zeros(order.ma_span),
        )

    def test_arithmetic(self):
        assert aic(self._model(-100.0, SarimaOrder(p=1, q=1))) == 208.0

    def test_extra_coefficient_costs_two(self):
        a = aic(self._model(-50.0, SarimaOrder(p=1)))
        b = aic(self._model(-50.0, SarimaOrder(p=2)))
        assert b - a == 2.0


class TestAutoTune:
    def test_winner_minimises_aic(self):
        y = simulate_arma(500, phi=[0.7], seed=21)
        results = grid_search(y, max_order=2, m=1)
        assert len(results) == 9
        order, model = auto_tune(y, max_order=2, m=1)
        for other in results.values():
            if other is not None:
                assert aic(model) <= aic(other)
        assert order.p >= 1

    def test_max_order_zero(self):
        y = simulate_arma(200, seed=22)
        order, model = auto_tune(y, max_order=0, m=24)
        assert order.as_tuple() == (0, 0, 0, 0, 0, 0, 24)
        assert model.order.n_coef == 0
        np.testing.assert_allclose(forecast(model, 3), y.mean())

    def test_ar1_selection_rate(self):
        hits = 0
        for seed in range(20):
            y = simulate_arma(400, phi=[0.8], seed=100 + seed)
            order, _ = auto_tune(y, max_order=2, m=1)
            hits += order.p >= 1 and order.P == 0 and order.Q == 0
        assert hits >= 18

    def test_all_fail(self):
        with pytest.raises(NoFeasibleModel):
            auto_tune(np.arange(9.0), max_order=3, m=1)

    def test_parallel_matches_serial(self):
        y = simulate_arma(300, phi=[0.5], seed=23)
        assert auto_tune(y, 1, 1, jobs=2)[0] == auto_tune(y, 1, 1, jobs=1)[0]


class TestPersistence:
    def test_round_trip(self, tmp_path):
        y = simulate_arma(800, phi=[0.6], theta=[0.2], sphi=[0.4], m=12, seed=31)
        model = fit(y, SarimaOrder(p=1, q=1, P=1, m=12))
        save_model(model, tmp_path / "m.txt")
        back = load_model(tmp_path / "m.txt")
        np.testing.assert_array_equal(forecast(model, 40), forecast(back, 40))
        assert back.order == model.order
        text = (tmp_path / "m.txt").read_text()
        for key in ("p=", "m=12", "c=", "sigma2=", "ar.0=", "ma.0=", "sar.0=", "tail.0=", "resid.0="):
            assert key in text


class TestEstimator:
    def test_spacing_sets_season(self):
        t = np.arange(24 * 30)
        values = 50 + 10 * np.sin(2 * np.pi * t / 24) + np.random.default_rng(3).normal(0, 1, t.size)
        series = TimeSeries("h", 60.0, values)
        est = SarimaForecaster(order=(1, 0, 0, 1, 0, 0)).fit(series)
        assert est.order_.m == 24
        assert est.predict(24).shape == (24,)
        assert np.isfinite(est.aic_)

    def test_get_params(self):
        params = SarimaForecaster(seasonal_period=12).get_params()
        assert params["seasonal_period"] == 12
        assert params["order"] == (1, 0, 1, 3, 0, 3)

    def test_array_needs_period(self):
        with pytest.raises(ValueError):
            SarimaForecaster().fit(np.arange(100.0))

    def test_auto(self):
        y = simulate_arma(300, phi=[0.7], seed=41)
        est = SarimaForecaster(order=(0, 0, 0), seasonal_period=1, auto=True, max_order=1).fit(y)
        assert est.order_.p == 1
