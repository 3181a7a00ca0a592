"""Bound-constrained mean-variance portfolios and the efficient frontier.

The core problem is

    min  w'Qw
    s.t. mu'w >= epsilon
         sum(w) = 1
         l <= w <= u

solved by the active-set engine in :mod:`gptfolio.qp`. Sweeping epsilon
from the minimum-variance return to the maximum achievable return traces
the efficient frontier, from which the min-variance, max-return and
max-Sharpe portfolios are selected.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import qp
from .errors import ConvergenceError, DataError, InfeasibleError
from .market_data import Moments

WEIGHT_SUM_TOL = 1e-9

LABEL_GPT = "GPT-weighted"
LABEL_EQUAL = "Equally-weighted"
LABEL_MIN_VAR = "Min Var"
LABEL_MAX_RET = "Max Ret"
LABEL_MAX_SHARPE = "Max Sharpe"


@dataclass(frozen=True)
class BoundSpec:
    """Scalar per-asset weight bounds l <= w_i <= u."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise DataError(f"bounds must satisfy 0 <= l <= u <= 1, got {self}")

    def validate_for(self, n: int) -> None:
        """Budget feasibility for a universe of n assets."""
        if n <= 0:
            raise DataError("universe size must be positive")
        if n * self.lower > 1.0 + WEIGHT_SUM_TOL or n * self.upper < 1.0 - WEIGHT_SUM_TOL:
            raise InfeasibleError(
                f"bounds {self} infeasible for {n} assets: need n*l <= 1 <= n*u"
            )


NO_SHORT_SALE = BoundSpec(0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Portfolio:
    tickers: tuple[str, ...]
    weights: np.ndarray
    label: str = ""
    kkt: qp.KktResiduals | None = field(default=None, repr=False)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if w.shape != (len(self.tickers),):
            raise DataError("weight vector length does not match tickers")
        if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise DataError(f"weights sum to {w.sum():.12f}, expected 1")

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(self.tickers, map(float, self.weights)))

    def with_label(self, label: str) -> "Portfolio":
        return replace(self, label=label)


@dataclass(frozen=True, eq=False)
class FrontierPoint:
    epsilon: float
    portfolio: Portfolio
    achieved_return: float
    variance: float
    # set on cardinality-constrained frontiers only
    gap: float | None = None
    truncated: bool = False

    def __post_init__(self):
        if self.achieved_return < self.epsilon - WEIGHT_SUM_TOL:
            raise DataError("frontier point misses its return target")
        if self.variance < -WEIGHT_SUM_TOL:
            raise DataError("negative variance on frontier point")

    @property
    def volatility(self) -> float:
        return math.sqrt(max(self.variance, 0.0))


@dataclass(frozen=True, eq=False)
class Frontier:
    points: tuple[FrontierPoint, ...]
    bounds: BoundSpec
    moments: Moments = field(repr=False)

    def __post_init__(self):
        eps = [p.epsilon for p in self.points]
        if any(b < a for a, b in zip(eps, eps[1:])):
            raise DataError("frontier points must be ordered by epsilon")
        vars_ = [p.variance for p in self.points]
        rets = [p.achieved_return for p in self.points]
        if any(b < a - WEIGHT_SUM_TOL for a, b in zip(vars_, vars_[1:])):
            raise ConvergenceError("frontier variances are not non-decreasing")
        if any(b < a - WEIGHT_SUM_TOL for a, b in zip(rets, rets[1:])):
            raise ConvergenceError("frontier returns are not non-decreasing")

    def __len__(self) -> int:
        return len(self.points)


def _portfolio_constraints(n: int, bounds: BoundSpec, mu: np.ndarray | None,
                           epsilon: float | None):
    A = np.ones((1, n))
    b = np.array([1.0])
    rows = [np.eye(n), -np.eye(n)]
    rhs = [np.full(n, bounds.upper), np.full(n, -bounds.lower)]
    if epsilon is not None:
        rows.append(-mu.reshape(1, -1))
        rhs.append(np.array([-epsilon]))
    return A, b, np.vstack(rows), np.concatenate(rhs)


def greedy_max_return(mu: np.ndarray, bounds: BoundSpec) -> np.ndarray:
    """Exact maximizer of mu'w over the budgeted box.

    Starts every asset at the lower bound and pours the remaining budget
    into assets in descending-mu order, capping each at the upper bound.
    Ties are resolved by position, so the result is deterministic.
    """
    n = len(mu)
    bounds.validate_for(n)
    w = np.full(n, bounds.lower, dtype=float)
    budget = 1.0 - w.sum()
    for i in np.argsort(-mu, kind="stable"):
        if budget <= 0.0:
            break
        add = min(bounds.upper - w[i], budget)
        w[i] += add
        budget -= add
    return w


def _feasible_start(mu: np.ndarray, bounds: BoundSpec, epsilon: float | None) -> np.ndarray:
    n = len(mu)
    lower = np.full(n, bounds.lower)
    upper = np.full(n, bounds.upper)
    w0 = qp.feasible_start_simplex(lower, upper)
    if epsilon is None or float(mu @ w0) >= epsilon:
        return w0
    w_best = greedy_max_return(mu, bounds)
    best_ret = float(mu @ w_best)
    if best_ret < epsilon - qp.FEASIBILITY_TOL:
        raise InfeasibleError(
            f"return target {epsilon:.6g} exceeds the maximum achievable "
            f"{best_ret:.6g} under bounds {bounds}"
        )
    if best_ret <= epsilon:
        return w_best
    t = (epsilon - float(mu @ w0)) / (best_ret - float(mu @ w0))
    return (1.0 - t) * w0 + t * w_best


def solve_bounded_qp(mu: np.ndarray, Q: np.ndarray, bounds: BoundSpec,
                     epsilon: float | None) -> tuple[np.ndarray, qp.KktResiduals]:
    """Raw-array core of :func:`solve_qp`, shared with branch-and-bound."""
    n = len(mu)
    bounds.validate_for(n)
    A, b, G, h = _portfolio_constraints(n, bounds, mu, epsilon)
    x0 = _feasible_start(mu, bounds, epsilon)
    result = qp.solve_qp(2.0 * Q, np.zeros(n), A, b, G, h, x0)
    if not result.kkt.ok():
        raise ConvergenceError(
            f"QP solved without a valid certificate (max residual {result.kkt.max:.3e})"
        )
    return result.x, result.kkt


def solve_qp(moments: Moments, bounds: BoundSpec, epsilon: float | None,
             label: str = "") -> Portfolio:
    """Minimize w'Qw under budget, bounds, and an optional return floor.

    ``epsilon=None`` drops the return constraint entirely. The returned
    portfolio carries the KKT residuals of its optimality certificate; a
    certificate worse than 1e-6 raises instead of returning silently.
    """
    w, kkt = solve_bounded_qp(moments.mu, moments.Q, bounds, epsilon)
    return Portfolio(moments.tickers, w, label=label, kkt=kkt)


def portfolio_return(moments: Moments, portfolio: Portfolio) -> float:
    return float(moments.mu @ portfolio.weights)


def portfolio_variance(moments: Moments, portfolio: Portfolio) -> float:
    w = portfolio.weights
    return float(w @ moments.Q @ w)


def min_variance(moments: Moments, bounds: BoundSpec) -> Portfolio:
    """Global minimum-variance portfolio (no return floor)."""
    return solve_qp(moments, bounds, None, label=LABEL_MIN_VAR)


def max_return(moments: Moments, bounds: BoundSpec) -> Portfolio:
    """Maximum expected return portfolio via the greedy fill."""
    w = greedy_max_return(moments.mu, bounds)
    return Portfolio(moments.tickers, w, label=LABEL_MAX_RET)


def equal_weight(tickers) -> Portfolio:
    if not tickers:
        raise DataError("cannot build an equal-weight portfolio of nothing")
    n = len(tickers)
    return Portfolio(tuple(tickers), np.full(n, 1.0 / n), label=LABEL_EQUAL)


def bounds_for_universe(n: int) -> BoundSpec:
    """Half/double-the-equal-weight bounds, rounded to two decimals.

    The 15/30/45 universes use the fixed (0.03, 0.13), (0.02, 0.07) and
    (0.01, 0.05) pairs; any other size falls back to rounding 1/(2n) and
    2/n, with the upper bound capped at 1.
    """
    if n <= 0:
        raise DataError("universe size must be positive")
    table = {15: (0.03, 0.13), 30: (0.02, 0.07), 45: (0.01, 0.05)}
    if n in table:
        return BoundSpec(*table[n])
    lower = round(0.5 / n, 2)
    upper = min(1.0, round(2.0 / n, 2))
    return BoundSpec(lower, upper)


def _frontier_point(moments: Moments, bounds: BoundSpec, epsilon: float) -> FrontierPoint:
    portfolio = solve_qp(moments, bounds, epsilon)
    return FrontierPoint(
        epsilon=epsilon,
        portfolio=portfolio,
        achieved_return=portfolio_return(moments, portfolio),
        variance=portfolio_variance(moments, portfolio),
    )


def compute_frontier(moments: Moments, bounds: BoundSpec, num_points: int = 100,
                     workers: int = 1) -> Frontier:
    """Sweep a linear epsilon grid between the min-variance and max-return
    portfolios' expected returns, inclusive of both endpoints.

    Grid points are independent solves, so ``workers > 1`` fans them out to
    a thread pool; assembly is sorted by epsilon either way and the output
    is identical for any worker count.
    """
    if num_points < 2:
        raise DataError("a frontier needs at least two points")
    lo = portfolio_return(moments, min_variance(moments, bounds))
    # rounding can put the min-variance return a few ulps past the greedy
    # maximum when both sit on the same vertex; the grid must not descend
    hi = max(lo, portfolio_return(moments, max_return(moments, bounds)))
    grid = np.linspace(lo, hi, num_points)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(lambda e: _frontier_point(moments, bounds, float(e)), grid))
    else:
        points = [_frontier_point(moments, bounds, float(e)) for e in grid]
    return Frontier(points=tuple(points), bounds=bounds, moments=moments)


def max_sharpe(frontier: Frontier) -> Portfolio:
    """Frontier point with the highest return/volatility ratio (rf = 0).

    Ties go to the lower-variance point, which is the earlier grid point.
    """
    if not frontier.points:
        raise DataError("cannot select from an empty frontier")
    best: FrontierPoint | None = None
    best_ratio = -math.inf
    for point in frontier.points:
        if point.variance <= 0.0:
            raise DataError("zero-variance frontier point has no Sharpe ratio")
        ratio = point.achieved_return / math.sqrt(point.variance)
        if ratio > best_ratio:
            best, best_ratio = point, ratio
    assert best is not None
    return best.portfolio.with_label(LABEL_MAX_SHARPE)
