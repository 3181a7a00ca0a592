import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gptfolio.errors import DataError
from gptfolio.market_data import (
    Moments,
    PeriodSpec,
    PricePanel,
    compute_returns,
    estimate_moments,
    load_prices,
    resample_weekly,
    slice_period,
)

from conftest import weekly_dates, write_price_csv


def make_panel(prices, start=dt.date(2021, 1, 4), step_days=1, tickers=None):
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    n = prices.shape[1]
    tickers = tickers or tuple(f"A{i}" for i in range(n))
    dates = tuple(start + dt.timedelta(days=i * step_days) for i in range(prices.shape[0]))
    return PricePanel(dates=dates, tickers=tuple(tickers), prices=prices)


def two_pass_covariance(x: np.ndarray) -> np.ndarray:
    """Independent covariance oracle: explicit two-pass, n-1 denominator."""
    n, k = x.shape
    mean = x.sum(axis=0) / n
    out = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            acc = 0.0
            for t in range(n):
                acc += (x[t, a] - mean[a]) * (x[t, b] - mean[b])
            out[a, b] = acc / (n - 1)
    return out


class TestLoadPrices:
    def test_well_formed_file_loads_identity(self, tmp_path):
        path = tmp_path / "prices.csv"
        dates = weekly_dates(3)
        write_price_csv(path, dates, ["AAA", "BBB"], [[1.0, 2.0], [1.1, 2.2], [1.2, 2.1]])
        panel = load_prices(path)
        assert panel.shape == (3, 2)
        assert panel.tickers == ("AAA", "BBB")
        assert panel.dates == dates
        np.testing.assert_allclose(panel.prices[2], [1.2, 2.1])

    def test_ticker_with_missing_cell_is_dropped(self, tmp_path, caplog):
        path = tmp_path / "prices.csv"
        path.write_text("date,AAA,BBB\n2021-01-04,1.0,2.0\n2021-01-05,,2.2\n")
        with caplog.at_level("WARNING"):
            panel = load_prices(path)
        assert panel.tickers == ("BBB",)
        assert "AAA" in caplog.text

    def test_nonpositive_price_drops_ticker(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("date,AAA,BBB\n2021-01-04,1.0,2.0\n2021-01-05,-1.0,2.2\n")
        panel = load_prices(path)
        assert panel.tickers == ("BBB",)

    def test_unsorted_rows_are_sorted(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("date,AAA\n2021-01-05,2.0\n2021-01-04,1.0\n")
        panel = load_prices(path)
        assert panel.prices[0, 0] == 1.0

    def test_zero_survivors_raises(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("date,AAA\n2021-01-04,\n2021-01-05,1.0\n")
        with pytest.raises(DataError):
            load_prices(path)

    def test_unparsable_file_raises(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("not a table at all")
        with pytest.raises(DataError):
            load_prices(path)

    def test_wide_complete_panel_keeps_all_columns(self, tmp_path, rng):
        # mirrors a constituents file where only complete series survive
        n = 485
        tickers = [f"S{i:03d}" for i in range(n)]
        prices = rng.uniform(10, 500, size=(6, n))
        path = tmp_path / "prices.csv"
        write_price_csv(path, weekly_dates(6), tickers, prices)
        panel = load_prices(path)
        assert panel.shape == (6, n)


class TestResampleWeekly:
    def test_five_weekdays_collapse_to_friday(self):
        # Mon 2021-01-04 .. Fri 2021-01-08
        panel = make_panel([[1.0], [2.0], [3.0], [4.0], [5.0]])
        weekly = resample_weekly(panel)
        assert weekly.shape == (1, 1)
        assert weekly.dates[0] == dt.date(2021, 1, 8)
        assert weekly.prices[0, 0] == 5.0

    def test_missing_friday_carries_thursday(self):
        dates = (dt.date(2021, 1, 4), dt.date(2021, 1, 5), dt.date(2021, 1, 7))
        panel = PricePanel(dates, ("A0",), np.array([[1.0], [2.0], [3.0]]))
        weekly = resample_weekly(panel)
        assert weekly.dates == (dt.date(2021, 1, 7),)
        assert weekly.prices[0, 0] == 3.0

    def test_two_weeks_give_two_rows(self):
        panel = make_panel([[float(i)] for i in range(1, 11)])  # 10 weekdays incl. weekend skip
        weekly = resample_weekly(panel)
        # 2021-01-04..2021-01-13 spans 2 ISO weeks
        assert weekly.shape[0] == 2

    def test_already_weekly_passes_through(self):
        panel = make_panel([[1.0], [2.0], [3.0]], step_days=7)
        weekly = resample_weekly(panel)
        assert weekly.dates == panel.dates
        np.testing.assert_array_equal(weekly.prices, panel.prices)

    def test_empty_panel_raises(self):
        panel = PricePanel((), ("A",), np.zeros((0, 1)))
        with pytest.raises(DataError):
            resample_weekly(panel)


class TestComputeReturns:
    def test_single_step(self):
        panel = make_panel([[100.0], [110.0]])
        rets = compute_returns(panel)
        np.testing.assert_allclose(rets.returns, [[0.10]])
        assert rets.dates == panel.dates[1:]

    def test_up_then_down(self):
        panel = make_panel([[100.0], [110.0], [99.0]])
        rets = compute_returns(panel)
        np.testing.assert_allclose(rets.returns[:, 0], [0.10, -0.10])

    def test_constant_prices_give_zero(self):
        panel = make_panel([[50.0], [50.0], [50.0]])
        rets = compute_returns(panel)
        np.testing.assert_array_equal(rets.returns, np.zeros((2, 1)))

    def test_single_row_raises(self):
        with pytest.raises(DataError):
            compute_returns(make_panel([[100.0]]))

    @given(st.lists(st.floats(min_value=1.0, max_value=1e4), min_size=2, max_size=40))
    @settings(max_examples=60, deadline=None)
    def test_compounding_round_trip(self, series):
        panel = make_panel([[p] for p in series])
        rets = compute_returns(panel)
        recovered = np.prod(1.0 + rets.returns[:, 0])
        assert recovered == pytest.approx(series[-1] / series[0], abs=1e-12, rel=1e-12)


class TestSlicePeriod:
    def make_returns(self):
        panel = make_panel([[float(i)] for i in range(1, 8)], step_days=7)
        return compute_returns(panel)

    def test_in_sample_cutoff(self):
        dates = weekly_dates(300, start=dt.date(2016, 9, 2))
        panel = PricePanel(dates, ("A",), np.arange(1.0, 301.0).reshape(-1, 1))
        spec = PeriodSpec("in-sample", dt.date(2016, 9, 1), dt.date(2021, 8, 31))
        sliced = slice_period(panel, spec)
        assert all(d <= dt.date(2021, 8, 31) for d in sliced.dates)
        assert len(sliced.dates) < len(dates)

    def test_covering_spec_is_identity(self):
        rets = self.make_returns()
        spec = PeriodSpec("all", dt.date(2020, 1, 1), dt.date(2022, 1, 1))
        sliced = slice_period(rets, spec)
        assert sliced.dates == rets.dates
        np.testing.assert_array_equal(sliced.returns, rets.returns)

    def test_disjoint_spec_raises(self):
        rets = self.make_returns()
        spec = PeriodSpec("future", dt.date(2030, 1, 1), dt.date(2031, 1, 1))
        with pytest.raises(DataError):
            slice_period(rets, spec)

    def test_idempotent(self):
        rets = self.make_returns()
        spec = PeriodSpec("head", rets.dates[0], rets.dates[2])
        once = slice_period(rets, spec)
        twice = slice_period(once, spec)
        assert once.dates == twice.dates
        np.testing.assert_array_equal(once.returns, twice.returns)


class TestEstimateMoments:
    def test_constant_returns_zero_covariance(self):
        panel = make_panel([[100.0], [105.0], [110.25]])
        rets = compute_returns(panel)
        m = estimate_moments(rets)
        assert m.mu[0] == pytest.approx(0.05)
        assert m.Q[0, 0] == pytest.approx(0.0, abs=1e-15)

    def test_hand_computed_two_asset_case(self):
        # returns A=[0.01, 0.03], B=[0.02, 0.00]
        from gptfolio.market_data import ReturnPanel

        rets = ReturnPanel(
            dates=weekly_dates(2),
            tickers=("A", "B"),
            returns=np.array([[0.01, 0.02], [0.03, 0.00]]),
        )
        m = estimate_moments(rets)
        np.testing.assert_allclose(m.mu, [0.02, 0.01], atol=1e-15)
        np.testing.assert_allclose(
            m.Q, [[2e-4, -2e-4], [-2e-4, 2e-4]], atol=1e-15
        )

    def test_matches_two_pass_oracle_on_random_panels(self, rng):
        from gptfolio.market_data import ReturnPanel

        for _ in range(20):
            x = rng.normal(0, 0.03, size=(5, 3))
            rets = ReturnPanel(weekly_dates(5), ("A", "B", "C"), x)
            m = estimate_moments(rets)
            np.testing.assert_allclose(m.Q, two_pass_covariance(x), atol=1e-12)
            np.testing.assert_allclose(m.mu, x.mean(axis=0), atol=1e-15)

    def test_five_year_weekly_panel_dimensions(self, rng):
        from gptfolio.market_data import ReturnPanel

        x = rng.normal(0, 0.02, size=(260, 15))
        rets = ReturnPanel(weekly_dates(260), tuple(f"T{i}" for i in range(15)), x)
        m = estimate_moments(rets)
        assert m.mu.shape == (15,)
        assert m.Q.shape == (15, 15)

    def test_psd_up_to_tolerance(self, rng):
        from gptfolio.market_data import ReturnPanel

        # more assets than observations: rank-deficient covariance
        x = rng.normal(0, 0.02, size=(6, 12))
        rets = ReturnPanel(weekly_dates(6), tuple(f"T{i}" for i in range(12)), x)
        m = estimate_moments(rets)
        assert np.linalg.eigvalsh(m.Q).min() >= -1e-10

    def test_single_row_raises(self):
        from gptfolio.market_data import ReturnPanel

        rets = ReturnPanel(weekly_dates(1), ("A",), np.array([[0.01]]))
        with pytest.raises(DataError):
            estimate_moments(rets)


class TestTypes:
    def test_panel_rejects_nonpositive_price(self):
        with pytest.raises(DataError):
            make_panel([[1.0], [0.0]])

    def test_panel_rejects_unsorted_dates(self):
        dates = (dt.date(2021, 1, 5), dt.date(2021, 1, 4))
        with pytest.raises(DataError):
            PricePanel(dates, ("A",), np.ones((2, 1)))

    def test_moments_rejects_asymmetric_q(self):
        with pytest.raises(DataError):
            Moments(np.zeros(2), np.array([[1.0, 0.5], [0.2, 1.0]]), ("A", "B"))

    def test_moments_restrict_reorders(self):
        m = Moments(
            np.array([0.1, 0.2, 0.3]),
            np.diag([1.0, 2.0, 3.0]),
            ("A", "B", "C"),
        )
        sub = m.restrict(["C", "A"])
        np.testing.assert_allclose(sub.mu, [0.3, 0.1])
        np.testing.assert_allclose(sub.Q, np.diag([3.0, 1.0]))

    def test_period_spec_rejects_inverted_window(self):
        with pytest.raises(DataError):
            PeriodSpec("bad", dt.date(2021, 1, 2), dt.date(2021, 1, 1))

    def test_panels_are_immutable(self):
        panel = make_panel([[1.0], [2.0]])
        with pytest.raises(ValueError):
            panel.prices[0, 0] = 9.9
