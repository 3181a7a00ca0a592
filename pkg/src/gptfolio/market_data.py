"""Price ingestion, weekly resampling, returns, and moment estimation.

The panel types are immutable: dates and tickers are tuples and the
underlying numpy arrays are frozen with ``writeable = False``, so every
operation below is a pure function that is safe to share across threads.
"""
from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError

logger = logging.getLogger(__name__)

# Accept Q as PSD when its smallest eigenvalue is above this.
PSD_EIGENVALUE_TOL = -1e-10
SYMMETRY_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PricePanel:
    """Aligned date-by-ticker matrix of adjusted close prices."""

    dates: tuple[dt.date, ...]
    tickers: tuple[str, ...]
    prices: np.ndarray  # shape (len(dates), len(tickers))

    def __post_init__(self):
        object.__setattr__(self, "prices", _freeze(self.prices))
        if self.prices.shape != (len(self.dates), len(self.tickers)):
            raise DataError(
                f"price matrix shape {self.prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.tickers)} tickers"
            )
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        if self.prices.size and not (self.prices > 0).all():
            raise DataError("all prices must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.prices.shape


@dataclass(frozen=True)
class ReturnPanel:
    """Weekly simple returns, one row fewer than the source price panel."""

    dates: tuple[dt.date, ...]
    tickers: tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "returns", _freeze(self.returns))
        if self.returns.shape != (len(self.dates), len(self.tickers)):
            raise DataError("return matrix shape does not match dates x tickers")
        if self.returns.size and not (self.returns > -1).all():
            raise DataError("simple returns must be greater than -1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.returns.shape


@dataclass(frozen=True)
class Moments:
    """Expected weekly return vector and covariance matrix of a universe."""

    mu: np.ndarray
    Q: np.ndarray
    tickers: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "mu", _freeze(self.mu))
        object.__setattr__(self, "Q", _freeze(self.Q))
        n = len(self.tickers)
        if self.mu.shape != (n,) or self.Q.shape != (n, n):
            raise DataError("mu/Q dimensions do not match the ticker list")
        if n and np.abs(self.Q - self.Q.T).max() > SYMMETRY_TOL:
            raise DataError("covariance matrix is not symmetric")
        if n and np.linalg.eigvalsh(self.Q).min() < PSD_EIGENVALUE_TOL:
            raise DataError("covariance matrix is not positive semidefinite")

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    def restrict(self, tickers: list[str] | tuple[str, ...]) -> "Moments":
        """Sub-moments for an ordered subset of this universe's tickers."""
        index = {t: i for i, t in enumerate(self.tickers)}
        missing = [t for t in tickers if t not in index]
        if missing:
            raise DataError(f"tickers not in universe: {missing}")
        idx = np.array([index[t] for t in tickers], dtype=int)
        return Moments(self.mu[idx], self.Q[np.ix_(idx, idx)], tuple(tickers))


@dataclass(frozen=True)
class PeriodSpec:
    """A labelled inclusive date window."""

    label: str
    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.start >= self.end:
            raise DataError(f"period '{self.label}': start must precede end")


def load_prices(path) -> PricePanel:
    """Load a delimited price table into a PricePanel.

    The file needs a ``date`` column (ISO-8601) plus one column per ticker.
    Tickers with any missing or non-positive cell are dropped and logged;
    the survivors form a complete panel.
    """
    try:
        frame = pd.read_csv(path)
    except Exception as exc:
        raise DataError(f"cannot parse price file {path}: {exc}") from exc
    if frame.empty or frame.shape[1] < 2:
        raise DataError(f"price file {path} needs a date column plus ticker columns")
    date_col = frame.columns[0]
    try:
        dates = pd.to_datetime(frame[date_col]).dt.date
    except Exception as exc:
        raise DataError(f"unparsable dates in column '{date_col}': {exc}") from exc
    frame = frame.drop(columns=[date_col])
    frame.index = dates
    frame = frame.sort_index()
    if frame.index.duplicated().any():
        raise DataError("duplicate dates in price file")

    values = frame.apply(pd.to_numeric, errors="coerce")
    good = values.notna().all(axis=0) & (values > 0).all(axis=0)
    dropped = [str(c) for c in values.columns[~good]]
    if dropped:
        logger.warning(
            "dropping %d ticker(s) with missing or non-positive prices: %s",
            len(dropped), ", ".join(dropped),
        )
    survivors = values.loc[:, good]
    if survivors.shape[1] == 0:
        raise DataError("no ticker has a complete positive price history")
    return PricePanel(
        dates=tuple(survivors.index),
        tickers=tuple(str(c) for c in survivors.columns),
        prices=survivors.to_numpy(dtype=float),
    )


def resample_weekly(panel: PricePanel) -> PricePanel:
    """Reduce a panel to one row per calendar week.

    Each week keeps the last available close of that ISO calendar week and
    its actual date, so a week with no Friday print carries Thursday's.
    Panels that are already weekly pass through unchanged.
    """
    if not panel.dates:
        raise DataError("cannot resample an empty panel")
    keep: list[int] = []
    last_week: tuple[int, int] | None = None
    for i, d in enumerate(panel.dates):
        week = d.isocalendar()[:2]
        if week == last_week:
            keep[-1] = i
        else:
            keep.append(i)
            last_week = week
    idx = np.array(keep, dtype=int)
    return PricePanel(
        dates=tuple(panel.dates[i] for i in keep),
        tickers=panel.tickers,
        prices=panel.prices[idx],
    )


def compute_returns(panel: PricePanel) -> ReturnPanel:
    """Simple returns r_t = P_t / P_{t-1} - 1, one row per step."""
    if len(panel.dates) < 2:
        raise DataError("need at least two dates to compute returns")
    rets = panel.prices[1:] / panel.prices[:-1] - 1.0
    return ReturnPanel(dates=panel.dates[1:], tickers=panel.tickers, returns=rets)


def slice_period(panel, spec: PeriodSpec):
    """Rows of a price or return panel with start <= date <= end."""
    mask = [spec.start <= d <= spec.end for d in panel.dates]
    if not any(mask):
        raise DataError(
            f"period '{spec.label}' ({spec.start}..{spec.end}) does not "
            f"overlap the panel range {panel.dates[0]}..{panel.dates[-1]}"
        )
    idx = np.flatnonzero(mask)
    dates = tuple(panel.dates[i] for i in idx)
    if isinstance(panel, PricePanel):
        return PricePanel(dates, panel.tickers, panel.prices[idx])
    return ReturnPanel(dates, panel.tickers, panel.returns[idx])


def estimate_moments(returns: ReturnPanel, jitter: float = 1e-10) -> Moments:
    """Arithmetic mean vector and sample covariance (n-1 denominator).

    The covariance is symmetrized by averaging with its transpose. A tiny
    diagonal is added only if the smallest eigenvalue falls below the PSD
    tolerance, which can happen from rounding on rank-deficient panels
    (more assets than observations).
    """
    if returns.shape[0] < 2:
        raise DataError("need at least two observations to estimate moments")
    mu = returns.returns.mean(axis=0)
    Q = np.cov(returns.returns, rowvar=False, ddof=1)
    Q = np.atleast_2d(Q)
    Q = (Q + Q.T) / 2.0
    if np.linalg.eigvalsh(Q).min() < PSD_EIGENVALUE_TOL:
        Q = Q + jitter * np.eye(Q.shape[0])
    return Moments(mu=mu, Q=Q, tickers=returns.tickers)
