import csv
import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gptfolio import fixtures
from gptfolio.backtest import (
    FUND_TICKERS,
    BenchmarkSet,
    MetricsReport,
    ReturnSeries,
    WealthCurve,
    annualized_sharpe,
    benchmark_average,
    compute_metrics,
    load_sector_map,
    max_drawdown,
    portfolio_returns,
    sector_allocation,
    value_at_risk_99,
    wealth_curve,
)
from gptfolio.errors import DataError
from gptfolio.market_data import ReturnPanel
from gptfolio.optimizer import Portfolio

from conftest import weekly_dates


def series(values, start=dt.date(2022, 1, 7)):
    values = np.asarray(values, dtype=float)
    return ReturnSeries(weekly_dates(len(values), start), values)


def make_panel(matrix, tickers):
    matrix = np.asarray(matrix, dtype=float)
    return ReturnPanel(weekly_dates(matrix.shape[0]), tuple(tickers), matrix)


class TestPortfolioReturns:
    def test_single_asset_identity(self):
        panel = make_panel([[0.01], [0.02]], ["A"])
        p = Portfolio(("A",), np.array([1.0]))
        out = portfolio_returns(p, panel)
        np.testing.assert_allclose(out.values, [0.01, 0.02])
        assert out.dates == panel.dates

    def test_equal_weights_average(self):
        panel = make_panel([[0.02, 0.00]], ["A", "B"])
        p = Portfolio(("A", "B"), np.array([0.5, 0.5]))
        out = portfolio_returns(p, panel)
        assert out.values[0] == pytest.approx(0.01)

    def test_missing_ticker_errors(self):
        panel = make_panel([[0.01]], ["A"])
        p = Portfolio(("A", "B"), np.array([0.5, 0.5]))
        with pytest.raises(DataError):
            portfolio_returns(p, panel)

    def test_column_order_does_not_matter(self):
        panel = make_panel([[0.02, 0.04]], ["B", "A"])
        p = Portfolio(("A", "B"), np.array([0.75, 0.25]))
        out = portfolio_returns(p, panel)
        assert out.values[0] == pytest.approx(0.75 * 0.04 + 0.25 * 0.02)


class TestWealthCurve:
    def test_compounding(self):
        curve = wealth_curve(series([0.01, -0.01]))
        np.testing.assert_allclose(curve.values, [1.0, 1.01, 1.01 * 0.99])

    def test_flat_for_zero_returns(self):
        curve = wealth_curve(series([0.0, 0.0, 0.0]))
        np.testing.assert_array_equal(curve.values, np.ones(4))

    def test_total_loss_rejected(self):
        with pytest.raises(DataError):
            wealth_curve(np.array([-1.0]))

    def test_anchor_one_week_before_first_return(self):
        s = series([0.01], start=dt.date(2022, 1, 14))
        curve = wealth_curve(s)
        assert curve.dates[0] == dt.date(2022, 1, 7)

    def test_explicit_start_date(self):
        s = series([0.01])
        curve = wealth_curve(s, start_date=dt.date(2021, 12, 31))
        assert curve.dates[0] == dt.date(2021, 12, 31)

    def test_curve_must_start_at_one(self):
        with pytest.raises(DataError):
            WealthCurve(weekly_dates(2), np.array([1.01, 1.0]))

    def test_returns_round_trip(self):
        s = series([0.05, -0.02, 0.03])
        curve = wealth_curve(s)
        np.testing.assert_allclose(curve.returns(), s.values, atol=1e-15)


class TestMaxDrawdown:
    def test_hand_computed_path(self):
        # trough 0.9 against peak 1.2
        assert max_drawdown([1.0, 1.2, 0.9, 1.1]) == -25.0

    def test_monotone_curve_has_zero_drawdown(self):
        assert max_drawdown([1.0, 1.1, 1.2, 1.3]) == 0.0

    def test_single_point(self):
        assert max_drawdown([1.0]) == 0.0


class TestVar99:
    def test_sort_and_interpolate_oracle(self):
        # quantile position (n-1)*0.01 = 0.03 between the two lowest values
        got = value_at_risk_99(np.array([-0.04, -0.02, 0.00, 0.01]))
        assert got == pytest.approx(-0.0394, abs=1e-12)

    def test_matches_numpy_percentile(self, rng):
        x = rng.normal(0, 0.03, size=500)
        assert value_at_risk_99(x) == pytest.approx(float(np.percentile(x, 1)))

    @given(st.lists(st.floats(min_value=-0.5, max_value=0.5), min_size=4, max_size=200))
    @settings(max_examples=80, deadline=None)
    def test_var99_below_median(self, values):
        x = np.array(values)
        assert value_at_risk_99(x) <= float(np.median(x)) + 1e-12


class TestSharpe:
    @pytest.mark.parametrize("mean,std,expected", [
        (0.17, 3.09, 0.39),
        (0.11, 2.69, 0.29),
        (0.26, 4.02, 0.47),
    ])
    def test_annualization_reproduces_reference_rows(self, mean, std, expected):
        assert annualized_sharpe(mean, std) == pytest.approx(expected, abs=0.01)

    def test_unit_free(self):
        assert annualized_sharpe(0.0017, 0.0309) == pytest.approx(
            annualized_sharpe(0.17, 3.09)
        )

    def test_zero_volatility_is_an_error(self):
        with pytest.raises(DataError):
            annualized_sharpe(0.1, 0.0)


class TestComputeMetrics:
    def test_cumulative_equals_final_wealth(self, rng):
        for _ in range(100):
            r = rng.uniform(-0.08, 0.09, size=int(rng.integers(2, 120)))
            report = compute_metrics(r)
            final = wealth_curve(r).values[-1] * 100.0
            assert report.cumulative_return == pytest.approx(final, abs=1e-9)

    def test_reported_units_are_percent(self):
        report = compute_metrics(series([0.01, 0.03]))
        assert report.expected_return == pytest.approx(2.0)
        assert report.cumulative_return == pytest.approx(101.0 * 1.03, abs=1e-9)

    def test_sharpe_sign_follows_mean(self, rng):
        r = rng.normal(-0.01, 0.02, size=60)
        r = r - r.mean() - 0.005  # force a negative mean
        report = compute_metrics(r)
        assert report.sharpe < 0

    def test_scaling_leaves_sharpe_unchanged(self, rng):
        r = rng.normal(0.002, 0.02, size=80)
        a = compute_metrics(r)
        b = compute_metrics(3.0 * r)
        assert a.sharpe == pytest.approx(b.sharpe, rel=1e-12)

    def test_zero_volatility_errors(self):
        with pytest.raises(DataError):
            compute_metrics(np.array([0.01, 0.01, 0.01]))

    def test_too_short_series_errors(self):
        with pytest.raises(DataError):
            compute_metrics(np.array([0.01]))

    def test_drawdown_invariant_enforced(self):
        with pytest.raises(DataError):
            MetricsReport(100.0, 0.0, 1.0, +5.0, 0.0, -1.0)


class TestBenchmarkAverage:
    def test_two_curve_symmetry(self):
        dates = weekly_dates(2)
        a = WealthCurve(dates, np.array([1.0, 1.1]))
        b = WealthCurve(dates, np.array([1.0, 0.9]))
        avg = benchmark_average([a, b])
        np.testing.assert_allclose(avg.values, [1.0, 1.0])

    def test_single_curve_identity(self):
        a = WealthCurve(weekly_dates(3), np.array([1.0, 1.2, 1.1]))
        avg = benchmark_average([a])
        np.testing.assert_array_equal(avg.values, a.values)

    def test_misaligned_grids_rejected(self):
        a = WealthCurve(weekly_dates(2), np.array([1.0, 1.1]))
        b = WealthCurve(weekly_dates(2, start=dt.date(2021, 6, 4)), np.array([1.0, 1.1]))
        with pytest.raises(DataError):
            benchmark_average([a, b])

    def test_configured_fund_list_averages(self, rng):
        dates = weekly_dates(10)
        curves = []
        for i, _ in enumerate(FUND_TICKERS):
            rets = rng.normal(0.001, 0.02, size=9)
            values = np.concatenate([[1.0], np.cumprod(1 + rets)])
            curves.append(WealthCurve(dates, values, label=FUND_TICKERS[i]))
        avg = benchmark_average(curves)
        assert len(FUND_TICKERS) == 13
        assert avg.label == "Popular Investment Funds"
        assert avg.values[0] == 1.0

    def test_order_invariance(self, rng):
        dates = weekly_dates(5)
        curves = []
        for _ in range(4):
            rets = rng.normal(0, 0.02, size=4)
            curves.append(WealthCurve(dates, np.concatenate([[1.0], np.cumprod(1 + rets)])))
        forward = benchmark_average(curves)
        backward = benchmark_average(list(reversed(curves)))
        np.testing.assert_allclose(forward.values, backward.values, atol=1e-15)


class TestSectorAllocation:
    def test_same_sector_aggregates(self):
        p = Portfolio(("A", "B"), np.array([0.6, 0.4]))
        out = sector_allocation(p, {"A": "Tech", "B": "Tech"})
        assert out == {"Tech": pytest.approx(1.0)}

    def test_disjoint_sectors_mirror_weights(self):
        p = Portfolio(("A", "B"), np.array([0.6, 0.4]))
        out = sector_allocation(p, {"A": "Tech", "B": "Energy"})
        assert out["Tech"] == pytest.approx(0.6)
        assert out["Energy"] == pytest.approx(0.4)

    def test_unmapped_ticker_errors(self):
        p = Portfolio(("A", "B"), np.array([0.6, 0.4]))
        with pytest.raises(DataError):
            sector_allocation(p, {"A": "Tech"})

    def test_reference_weighted_portfolio_is_tech_heavy(self):
        with open(fixtures.reference_weights_path(15)) as fh:
            rows = list(csv.DictReader(fh))
        tickers = tuple(r["ticker"] for r in rows)
        weights = np.array([float(r["weight"]) for r in rows])
        p = Portfolio(tickers, weights / weights.sum(), label="GPT-weighted")
        sectors = load_sector_map(fixtures.sector_map_path())
        allocation = sector_allocation(p, sectors)
        top = max(allocation, key=allocation.get)
        assert top == "Information Technology"


class TestBenchmarkSet:
    def test_alignment_enforced(self):
        a = WealthCurve(weekly_dates(2), np.array([1.0, 1.1]))
        b = WealthCurve(weekly_dates(3), np.array([1.0, 1.1, 1.2]))
        with pytest.raises(DataError):
            BenchmarkSet({"S&P 500": a}, {"VT": b}, None)

    def test_well_formed(self):
        a = WealthCurve(weekly_dates(2), np.array([1.0, 1.1]))
        b = WealthCurve(weekly_dates(2), np.array([1.0, 0.9]))
        bs = BenchmarkSet({"S&P 500": a}, {"VT": b}, benchmark_average([a, b]))
        assert bs.fund_average is not None
