import datetime as dt

import numpy as np
import pytest

from gptfolio.market_data import Moments

UNIVERSE_15 = (
    "MSFT", "KO", "DIS", "ADBE", "TSLA", "GOOGL", "HD", "NVDA", "JPM",
    "AAPL", "V", "PG", "JNJ", "AMZN", "UNH",
)
INDEX_COLUMNS = ("SPX", "DJI", "IXIC")
FUND_COLUMNS = (
    "VT", "FSPGX", "VTI", "FUQIX", "VMVAX", "FCNTX", "VHGEX", "FWWFX",
    "PRGSX", "MDGCX", "OLGAX", "FGIKX", "VDIGX",
)


def random_moments(rng: np.random.Generator, n: int, scale: float = 1.0) -> Moments:
    """Random PSD covariance and return vector for solver tests."""
    A = rng.normal(size=(n, n))
    Q = (A @ A.T) * scale / n
    Q = (Q + Q.T) / 2.0
    mu = rng.uniform(0.0, 0.3, size=n)
    tickers = tuple(f"T{i:02d}" for i in range(n))
    return Moments(mu=mu, Q=Q, tickers=tickers)


def paper_style_instance(rng, n):
    """Random weekly-return-scale moments with two-decimal bounds."""
    from gptfolio.optimizer import BoundSpec

    vols = rng.uniform(0.01, 0.05, size=n)
    corr_raw = rng.normal(size=(n, n + 2))
    C = corr_raw @ corr_raw.T
    d = np.sqrt(np.diag(C))
    corr = C / np.outer(d, d)
    Q = corr * np.outer(vols, vols)
    Q = (Q + Q.T) / 2.0
    mu = rng.uniform(-0.002, 0.008, size=n)
    tickers = tuple(f"T{i:02d}" for i in range(n))
    moments = Moments(mu=mu, Q=Q, tickers=tickers)
    bounds = BoundSpec(round(0.5 / n, 2), min(1.0, round(2.0 / n, 2)))
    return moments, bounds


def grid_search_variance(moments, bounds, epsilon, step=1e-3):
    """Dense simplex-grid oracle for n in {2, 3}: smallest w'Qw over grid
    points satisfying the budget, bounds and return constraints."""
    from gptfolio.errors import InfeasibleError

    Q, mu = moments.Q, moments.mu
    n = len(mu)
    lo, hi = bounds.lower, bounds.upper
    if n == 2:
        w1 = np.arange(max(lo, 1.0 - hi), min(hi, 1.0 - lo) + step / 2, step)
        W = np.column_stack([w1, 1.0 - w1])
    elif n == 3:
        g = np.arange(lo, hi + step / 2, step)
        w1, w2 = np.meshgrid(g, g, indexing="ij")
        w3 = 1.0 - w1 - w2
        W = np.column_stack([w1.ravel(), w2.ravel(), w3.ravel()])
        W = W[(W[:, 2] >= lo - 1e-12) & (W[:, 2] <= hi + 1e-12)]
    else:
        raise ValueError("oracle supports n in {2, 3}")
    if epsilon is not None:
        W = W[W @ mu >= epsilon - 1e-12]
    if W.shape[0] == 0:
        raise InfeasibleError("oracle grid empty")
    objs = np.einsum("ij,jk,ik->i", W, Q, W)
    return float(objs.min())


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20230811)


def weekly_dates(n: int, start: dt.date = dt.date(2020, 1, 3)) -> tuple[dt.date, ...]:
    return tuple(start + dt.timedelta(weeks=i) for i in range(n))


def write_price_csv(path, dates, tickers, prices) -> None:
    with open(path, "w") as fh:
        fh.write("date," + ",".join(tickers) + "\n")
        for d, row in zip(dates, prices):
            cells = ",".join(f"{float(v)!r}" for v in row)
            fh.write(f"{d.isoformat()},{cells}\n")


def synthetic_price_file(path, tickers, seed=7,
                         start=dt.date(2016, 9, 2), end=dt.date(2023, 7, 28)):
    """Weekly Friday closes from a seeded random walk, one column per ticker."""
    rng = np.random.default_rng(seed)
    dates = []
    d = start
    while d <= end:
        dates.append(d)
        d += dt.timedelta(weeks=1)
    n = len(tickers)
    drift = rng.uniform(-0.001, 0.004, size=n)
    vol = rng.uniform(0.015, 0.04, size=n)
    rets = rng.normal(drift, vol, size=(len(dates) - 1, n))
    prices = 100.0 * np.vstack([np.ones(n), np.cumprod(1.0 + rets, axis=0)])
    write_price_csv(path, dates, tickers, prices)
    return path
