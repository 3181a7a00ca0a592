import numpy as np
import pytest

from gptfolio import serialize as ser
from gptfolio.backtest import MetricsReport, WealthCurve, compute_metrics
from gptfolio.cardinality import CardinalitySolution
from gptfolio.errors import DataError
from gptfolio.market_data import Moments
from gptfolio.optimizer import BoundSpec, Portfolio, compute_frontier

from conftest import random_moments, weekly_dates


class TestPortfolioFiles:
    def test_round_trip_exact(self, tmp_path):
        p = Portfolio(("AAPL", "MSFT"), np.array([1 / 3, 2 / 3]), label="Min Var")
        path = tmp_path / "p.csv"
        ser.write_portfolio(path, p)
        back = ser.read_portfolio(path)
        assert back.label == "Min Var"
        assert back.tickers == p.tickers
        np.testing.assert_array_equal(back.weights, p.weights)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("ticker,weight\n")
        with pytest.raises(DataError):
            ser.read_portfolio(path)


class TestFrontierFiles:
    def test_round_trip(self, tmp_path, rng):
        m = random_moments(rng, 4, scale=1e-3)
        f = compute_frontier(m, BoundSpec(0.1, 0.6), num_points=5)
        path = tmp_path / "f.csv"
        ser.write_frontier(path, f)
        rows = ser.read_frontier_rows(path)
        assert len(rows) == 5
        for row, point in zip(rows, f.points):
            assert row["epsilon"] == point.epsilon
            assert row["variance"] == point.variance
            np.testing.assert_array_equal(row["weights"], point.portfolio.weights)
            assert row["gap"] is None

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(DataError):
            ser.read_frontier_rows(path)


class TestCcSolutionFiles:
    def test_contains_z_row_and_gap(self, tmp_path):
        p = Portfolio(("A", "B", "C"), np.array([0.5, 0.5, 0.0]))
        sol = CardinalitySolution(p, (1, 1, 0), 0.01, 0.002, 1.5e-7)
        path = tmp_path / "cc.csv"
        ser.write_cc_solution(path, sol)
        text = path.read_text()
        assert "ticker,weight,z" in text
        assert "# gap: 1.5e-07" in text
        assert "A,0.5,1" in text


class TestCurveFiles:
    def test_round_trip(self, tmp_path):
        curve = WealthCurve(weekly_dates(3), np.array([1.0, 1.1, 0.99]), label="X")
        path = tmp_path / "c.csv"
        ser.write_curve(path, curve)
        back = ser.read_curve(path)
        assert back.label == "X"
        assert back.dates == curve.dates
        np.testing.assert_array_equal(back.values, curve.values)

    def test_metrics_recompute_from_curve(self, tmp_path, rng):
        r = rng.uniform(-0.05, 0.06, size=40)
        from gptfolio.backtest import wealth_curve

        curve = wealth_curve(r)
        path = tmp_path / "c.csv"
        ser.write_curve(path, curve)
        back = ser.read_curve(path)
        a = compute_metrics(r)
        b = compute_metrics(back.returns())
        for col in ser.METRIC_COLUMNS:
            assert getattr(a, col) == pytest.approx(getattr(b, col), abs=1e-9)


class TestMetricsTables:
    def test_round_trip_and_order(self, tmp_path):
        rows = [
            ("GPT-weighted", MetricsReport(113.04, 0.17, 3.09, -27.75, 0.39, -3.92)),
            ("S&P 500", MetricsReport(101.29, 0.04, 2.62, -24.82, 0.13, -3.42)),
        ]
        path = tmp_path / "m.csv"
        ser.write_metrics_table(path, rows)
        back = ser.read_metrics_table(path)
        assert [label for label, _ in back] == ["GPT-weighted", "S&P 500"]
        assert back[0][1] == rows[0][1]
        header = path.read_text().splitlines()[0]
        assert header == "strategy,cumulative_return,expected_return,volatility,max_drawdown,sharpe,var99"

    def test_pretty_format_rounds_to_two_decimals(self):
        rows = [("Min Var", MetricsReport(107.3234, 0.1111, 2.69, -23.68, 0.294, -3.29))]
        text = ser.format_metrics_pretty(rows)
        assert "107.32" in text
        assert "0.29" in text

    def test_byte_identical_rewrites(self, tmp_path):
        rows = [("Max Ret", MetricsReport(119.76, 0.26, 4.02, -37.53, 0.47, -4.63))]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        ser.write_metrics_table(a, rows)
        ser.write_metrics_table(b, rows)
        assert a.read_bytes() == b.read_bytes()
