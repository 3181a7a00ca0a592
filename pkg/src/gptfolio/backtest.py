"""Out-of-sample evaluation: wealth curves and the weekly metric suite.

A fixed-weight portfolio is rebalanced back to its target weights every
week, so its weekly return is simply w'r_t. Metrics follow the reporting
conventions of the evaluation tables: percentages for returns, volatility,
drawdown and value-at-risk; the Sharpe ratio is annualized from weekly
observations with a zero risk-free rate.
"""
from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .market_data import ReturnPanel
from .optimizer import Portfolio

logger = logging.getLogger(__name__)

WEEKS_PER_YEAR = 52

INDEX_LABELS = ("S&P 500", "Dow Jones", "NASDAQ")
FUNDS_LABEL = "Popular Investment Funds"
FUND_TICKERS = (
    "VT", "FSPGX", "VTI", "FUQIX", "VMVAX", "FCNTX", "VHGEX", "FWWFX",
    "PRGSX", "MDGCX", "OLGAX", "FGIKX", "VDIGX",
)


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Dated weekly simple returns of one strategy."""

    dates: tuple[dt.date, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.shape != (len(self.dates),):
            raise DataError("return series dates/values length mismatch")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class WealthCurve:
    """Compounded index levels normalized to 1.0 at the period start."""

    dates: tuple[dt.date, ...]
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.shape != (len(self.dates),):
            raise DataError("wealth curve dates/values length mismatch")
        if len(v) == 0 or v[0] != 1.0:
            raise DataError("wealth curves start at exactly 1.0")
        if not (v > 0).all():
            raise DataError("wealth curve values must stay positive")

    def returns(self) -> np.ndarray:
        return self.values[1:] / self.values[:-1] - 1.0

    def with_label(self, label: str) -> "WealthCurve":
        return WealthCurve(self.dates, self.values, label)


@dataclass(frozen=True)
class MetricsReport:
    """Weekly evaluation metrics, reported in the table's units:
    percent for everything except the dimensionless Sharpe ratio."""

    cumulative_return: float
    expected_return: float
    volatility: float
    max_drawdown: float
    sharpe: float
    var99: float

    def __post_init__(self):
        if self.volatility < 0:
            raise DataError("volatility cannot be negative")
        if self.max_drawdown > 0:
            raise DataError("drawdown is reported as a non-positive percent")


@dataclass(frozen=True, eq=False)
class BenchmarkSet:
    index_curves: dict[str, WealthCurve]
    fund_curves: dict[str, WealthCurve]
    fund_average: WealthCurve | None

    def __post_init__(self):
        curves = list(self.index_curves.values()) + list(self.fund_curves.values())
        if self.fund_average is not None:
            curves.append(self.fund_average)
        grids = {c.dates for c in curves}
        if len(grids) > 1:
            raise DataError("benchmark curves must share one date grid")


def portfolio_returns(portfolio: Portfolio, panel: ReturnPanel) -> ReturnSeries:
    """Weekly strategy returns w'r_t under weekly rebalancing to w."""
    index = {t: i for i, t in enumerate(panel.tickers)}
    missing = [t for t in portfolio.tickers if t not in index]
    if missing:
        raise DataError(f"return panel lacks portfolio tickers: {missing}")
    cols = np.array([index[t] for t in portfolio.tickers], dtype=int)
    values = panel.returns[:, cols] @ portfolio.weights
    return ReturnSeries(dates=panel.dates, values=values)


def _as_return_array(returns) -> np.ndarray:
    if isinstance(returns, ReturnSeries):
        return returns.values
    return np.asarray(returns, dtype=float)


def wealth_curve(returns, start_date: dt.date | None = None,
                 label: str = "") -> WealthCurve:
    """Compound a return series into index levels with a leading 1.0.

    The anchor point is dated one week before the first return unless a
    start date is supplied.
    """
    values = _as_return_array(returns)
    if values.size == 0:
        raise DataError("cannot compound an empty return series")
    if (values <= -1.0).any():
        raise DataError("a return of -100% or worse breaks compounding")
    levels = np.concatenate([[1.0], np.cumprod(1.0 + values)])
    if isinstance(returns, ReturnSeries):
        anchor = start_date or (returns.dates[0] - dt.timedelta(weeks=1))
        dates = (anchor, *returns.dates)
    else:
        anchor = start_date or dt.date(1970, 1, 1)
        dates = tuple(anchor + dt.timedelta(weeks=i) for i in range(len(levels)))
    return WealthCurve(dates=dates, values=levels, label=label)


def max_drawdown(wealth_values) -> float:
    """Most negative peak-to-trough decline of a wealth path, in percent."""
    v = np.asarray(wealth_values, dtype=float)
    if v.size == 0:
        raise DataError("cannot compute drawdown of an empty path")
    peaks = np.maximum.accumulate(v)
    return float((v / peaks - 1.0).min()) * 100.0


def annualized_sharpe(mean_weekly: float, std_weekly: float) -> float:
    """Weekly mean over weekly volatility, scaled by sqrt(52); rf = 0.

    The ratio is unit-free, so percent or fraction inputs agree.
    """
    if std_weekly <= 0:
        raise DataError("Sharpe ratio undefined at zero volatility")
    return mean_weekly / std_weekly * np.sqrt(WEEKS_PER_YEAR)


def value_at_risk_99(returns) -> float:
    """Empirical 1% quantile of weekly returns with linear interpolation."""
    values = _as_return_array(returns)
    if values.size == 0:
        raise DataError("cannot compute a quantile of an empty series")
    return float(np.percentile(values, 1.0))


def compute_metrics(returns) -> MetricsReport:
    """The six-column weekly metric set for one return series."""
    values = _as_return_array(returns)
    if values.size < 2:
        raise DataError("need at least two observations for the metric suite")
    mean = float(values.mean())
    std = float(values.std(ddof=1))
    levels = np.concatenate([[1.0], np.cumprod(1.0 + values)])
    return MetricsReport(
        cumulative_return=float(levels[-1]) * 100.0,
        expected_return=mean * 100.0,
        volatility=std * 100.0,
        max_drawdown=max_drawdown(levels),
        sharpe=annualized_sharpe(mean, std),
        var99=value_at_risk_99(values) * 100.0,
    )


def benchmark_average(curves: list[WealthCurve], label: str = FUNDS_LABEL) -> WealthCurve:
    """Pointwise mean of wealth curves sharing one date grid."""
    if not curves:
        raise DataError("cannot average zero curves")
    grid = curves[0].dates
    for c in curves[1:]:
        if c.dates != grid:
            raise DataError("curves are not aligned on one date grid")
    stacked = np.vstack([c.values for c in curves])
    return WealthCurve(dates=grid, values=stacked.mean(axis=0), label=label)


def sector_allocation(portfolio: Portfolio, sector_map: dict[str, str]) -> dict[str, float]:
    """Portfolio weight summed per sector; sectors keep first-seen order."""
    missing = [t for t in portfolio.tickers if t not in sector_map]
    if missing:
        raise DataError(f"sector map lacks tickers: {missing}")
    out: dict[str, float] = {}
    for ticker, weight in zip(portfolio.tickers, portfolio.weights):
        sector = sector_map[ticker]
        out[sector] = out.get(sector, 0.0) + float(weight)
    return out


def load_sector_map(path) -> dict[str, str]:
    """Two-column ticker,sector file with a header row."""
    import csv

    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise DataError(f"sector map {path} needs ticker,sector columns")
        for row in reader:
            if len(row) >= 2 and row[0].strip():
                out[row[0].strip().upper()] = row[1].strip()
    if not out:
        raise DataError(f"sector map {path} is empty")
    return out
