"""Exact-K portfolio selection by branch-and-bound on binary pickers.

The problem couples each weight to a binary selection variable:

    min  w'Qw
    s.t. mu'w >= epsilon
         sum(w) = 1
         sum(z) = K
         l*z_i <= w_i <= u*z_i       (semicontinuous coupling)
         z in {0,1}^n

so a held asset must carry between l and u of the budget and an unheld
asset carries exactly zero. The search relaxes z to [0,1], solves each
node's relaxation with the active-set engine, branches on the most
fractional z (ties to the lowest asset index), and dives depth-first,
restarting from the best-bound open node whenever a dive closes. A
rounding heuristic (fix the K largest relaxed z, re-solve the bounded QP
on that subset) supplies incumbents early.

``brute_force_cc`` enumerates every K-subset outright and is the
verification oracle for small instances.
"""
from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import optimizer, qp
from .errors import BudgetError, DataError, InfeasibleError
from .market_data import Moments
from .optimizer import BoundSpec, Frontier, FrontierPoint, Portfolio

ZERO_WEIGHT_TOL = 1e-12
GAP_TOL = 1e-6
NODE_BUDGET = 10**6
SUBSET_BUDGET = 10**6
_INTEGRALITY_TOL = 1e-9
_PRUNE_CAP = 1e-9

LABEL_MIN_VAR_CARD = "Min Var - card"
LABEL_MAX_RET_CARD = "Max Ret - card"
LABEL_MAX_SHARPE_CARD = "Max Sharpe - card"


def cardinality_of(w, tol: float = ZERO_WEIGHT_TOL) -> int:
    """Number of strictly nonzero weights; entries within ``tol`` count as zero."""
    return int((np.abs(np.asarray(w, dtype=float)) > tol).sum())


@dataclass(frozen=True)
class CardinalitySpec:
    """Hold exactly K assets, each weighted within the given bounds."""

    K: int
    bounds: BoundSpec

    def __post_init__(self):
        if self.K < 1:
            raise DataError("cardinality must be at least 1")
        # budget must fit exactly K held assets
        self.bounds.validate_for(self.K)


@dataclass(frozen=True)
class BnBStats:
    nodes_explored: int
    incumbent_updates: int
    wall_time: float

    def __post_init__(self):
        if self.nodes_explored < 1:
            raise DataError("a search explores at least the root node")


@dataclass(frozen=True, eq=False)
class CardinalitySolution:
    portfolio: Portfolio
    z: tuple[int, ...]
    epsilon: float | None
    variance: float
    optimality_gap: float
    truncated: bool = False
    stats: BnBStats | None = field(default=None, repr=False)

    def __post_init__(self):
        w = self.portfolio.weights
        if len(self.z) != len(w):
            raise DataError("selection vector length does not match weights")
        if any(v not in (0, 1) for v in self.z):
            raise DataError("selection vector must be binary")
        held = np.array(self.z, dtype=bool)
        if np.abs(w[~held]).max(initial=0.0) != 0.0:
            raise DataError("unselected assets must carry exactly zero weight")

    @property
    def K(self) -> int:
        return int(sum(self.z))


def _best_integer_return(mu, is_free, k_free, bounds):
    """Exact maximum of mu'w over the node's integer-feasible points: hold
    every forced asset plus the k_free best free assets, then fill greedily.
    Uniform bounds make the top-k exchange argument exact. Returns the
    achieved return together with the holding mask."""
    rank = np.where(is_free, -mu, np.inf)  # forced assets sort last
    chosen = np.argsort(rank, kind="stable")[:k_free]
    held = ~np.asarray(is_free)
    held[chosen] = True
    idx = np.flatnonzero(held)
    w_held = optimizer.greedy_max_return(mu[idx], bounds)
    w = np.zeros(len(mu))
    w[idx] = w_held
    return float(mu @ w), held, w


class _Node:
    __slots__ = ("id", "parent", "depth", "fixed", "bound", "w", "z")

    def __init__(self, id_, parent, depth, fixed, bound, w, z):
        self.id = id_
        self.parent = parent
        self.depth = depth
        self.fixed = fixed  # -1 out, +1 in, 0 free
        self.bound = bound
        self.w = w
        self.z = z


class _BranchAndBound:
    def __init__(self, moments: Moments, spec: CardinalitySpec, epsilon: float | None,
                 node_budget: int, node_log=None,
                 warm_subset: tuple[int, ...] | None = None):
        if spec.K > moments.n_assets:
            raise InfeasibleError(
                f"cardinality {spec.K} exceeds the {moments.n_assets}-asset universe"
            )
        self.moments = moments
        self.spec = spec
        self.epsilon = epsilon
        self.node_budget = node_budget
        self.node_log = node_log
        self.warm_subset = warm_subset
        self.n = moments.n_assets
        self.explored = 0
        self.incumbent_updates = 0
        self.inc_obj: float | None = None
        self.inc_w: np.ndarray | None = None
        self.inc_z: np.ndarray | None = None
        self._ids = itertools.count()
        self._seq = itertools.count()
        self._subset_cache: dict[tuple[int, ...], tuple[float, np.ndarray] | None] = {}

    # -- logging ----------------------------------------------------------

    def _log(self, record: dict) -> None:
        if self.node_log is not None:
            self.node_log.write(json.dumps(record) + "\n")

    def _log_node(self, node: _Node, action: str, **extra) -> None:
        self._log({
            "event": "node", "id": node.id, "parent": node.parent,
            "depth": node.depth, "action": action, "bound": node.bound,
            "incumbent": self.inc_obj, **extra,
        })

    # -- relaxation -------------------------------------------------------

    def _make_node(self, fixed: np.ndarray, parent: int | None, depth: int) -> _Node | None:
        nid = next(self._ids)
        self.explored += 1
        solved = self._solve_relaxation(fixed)
        if solved is None:
            self._log({"event": "node", "id": nid, "parent": parent, "depth": depth,
                       "action": "infeasible", "bound": None, "incumbent": self.inc_obj})
            return None
        bound, w, z = solved
        return _Node(nid, parent, depth, fixed, bound, w, z)

    def _solve_relaxation(self, fixed: np.ndarray):
        mu, Q = self.moments.mu, self.moments.Q
        lower, upper = self.spec.bounds.lower, self.spec.bounds.upper
        f1 = np.flatnonzero(fixed == 1)
        free = np.flatnonzero(fixed == 0)
        k_free = self.spec.K - len(f1)
        if k_free < 0 or k_free > len(free):
            return None

        # fully decided nodes collapse to a plain bounded QP on the held set
        if k_free == 0 or k_free == len(free):
            held = f1 if k_free == 0 else np.concatenate([f1, free])
            held = np.sort(held)
            solved = self._solve_subset(tuple(int(i) for i in held))
            if solved is None:
                return None
            obj, w_sub = solved
            w = np.zeros(self.n)
            w[held] = w_sub
            z = np.zeros(self.n)
            z[held] = 1.0
            return obj, w, z

        act = np.sort(np.concatenate([f1, free]))
        na, nu = len(act), len(free)
        is_free_act = np.isin(act, free)
        free_pos = {int(a): j for j, a in enumerate(act[is_free_act])}
        mu_act = mu[act]
        Q_act = Q[np.ix_(act, act)]

        nv = na + nu
        A = np.zeros((2, nv))
        A[0, :na] = 1.0
        A[1, na:] = 1.0
        b = np.array([1.0, float(k_free)])

        # for l < u the coupling pair l*z <= w <= u*z already forces z >= 0,
        # so the explicit row is only needed in the degenerate l == u case
        need_z_floor = not (lower < upper)
        rows, rhs = [], []
        for j in range(na):
            if is_free_act[j]:
                zc = na + free_pos[int(act[j])]
                r = np.zeros(nv); r[j] = 1.0; r[zc] = -upper
                rows.append(r); rhs.append(0.0)            # w <= u z
                r = np.zeros(nv); r[j] = -1.0; r[zc] = lower
                rows.append(r); rhs.append(0.0)            # l z <= w
                r = np.zeros(nv); r[zc] = 1.0
                rows.append(r); rhs.append(1.0)            # z <= 1
                if need_z_floor:
                    r = np.zeros(nv); r[zc] = -1.0
                    rows.append(r); rhs.append(0.0)        # z >= 0
            else:
                r = np.zeros(nv); r[j] = 1.0
                rows.append(r); rhs.append(upper)
                r = np.zeros(nv); r[j] = -1.0
                rows.append(r); rhs.append(-lower)
        if self.epsilon is not None:
            r = np.zeros(nv); r[:na] = -mu_act
            rows.append(r); rhs.append(-self.epsilon)
        G = np.vstack(rows)
        h = np.array(rhs)

        x0 = self._feasible_node_start(mu_act, is_free_act, k_free, nu, A, b, G, h)
        if x0 is None:
            return None

        P = np.zeros((nv, nv))
        P[:na, :na] = 2.0 * Q_act
        result = qp.solve_qp(P, np.zeros(nv), A, b, G, h, x0)

        w = np.zeros(self.n)
        w[act] = result.x[:na]
        z = np.zeros(self.n)
        z[f1] = 1.0
        z[free] = result.x[na:]
        return result.objective, w, z

    def _feasible_node_start(self, mu_act, is_free_act, k_free, nu, A, b, G, h):
        lower, upper = self.spec.bounds.lower, self.spec.bounds.upper
        z0 = np.full(nu, k_free / nu)
        zval = np.where(is_free_act, k_free / nu, 1.0)
        w0 = qp.feasible_start_simplex(lower * zval, upper * zval)
        x0 = np.concatenate([w0, z0])
        if self.epsilon is None or float(mu_act @ w0) >= self.epsilon:
            return x0
        # the best integer-feasible return caps every integer descendant, so
        # missing epsilon there prunes the node outright; otherwise that
        # point is itself relaxation-feasible and anchors the blend
        best_ret, held, w_int = _best_integer_return(
            mu_act, is_free_act, k_free, self.spec.bounds)
        if best_ret < self.epsilon - qp.FEASIBILITY_TOL:
            return None
        x_int = np.concatenate([w_int, held[is_free_act].astype(float)])
        start_ret = float(mu_act @ w0)
        if best_ret <= start_ret:
            return x_int
        t = min(1.0, (self.epsilon - start_ret) / (best_ret - start_ret))
        return (1.0 - t) * x0 + t * x_int

    # -- incumbents -------------------------------------------------------

    def _solve_subset(self, subset: tuple[int, ...]):
        cached = self._subset_cache.get(subset)
        if cached is not None or subset in self._subset_cache:
            return cached
        idx = np.array(subset, dtype=int)
        mu_s = self.moments.mu[idx]
        Q_s = self.moments.Q[np.ix_(idx, idx)]
        try:
            w_s, _ = optimizer.solve_bounded_qp(mu_s, Q_s, self.spec.bounds, self.epsilon)
        except InfeasibleError:
            self._subset_cache[subset] = None
            return None
        obj = float(w_s @ Q_s @ w_s)
        self._subset_cache[subset] = (obj, w_s)
        return obj, w_s

    def _update_incumbent(self, obj: float, w: np.ndarray, z: np.ndarray,
                          source: str, node_id: int) -> None:
        if self.inc_obj is not None and obj >= self.inc_obj - 1e-12:
            return
        w = w.copy()
        w[z < 0.5] = 0.0
        self.inc_obj = obj
        self.inc_w = w
        self.inc_z = np.round(z).astype(int)
        self.incumbent_updates += 1
        self._log({"event": "incumbent", "source": source, "node": node_id,
                   "objective": obj})

    def _rounding_heuristic(self, node: _Node) -> None:
        f1 = np.flatnonzero(node.fixed == 1)
        free = np.flatnonzero(node.fixed == 0)
        k_free = self.spec.K - len(f1)
        if k_free < 0 or k_free > len(free):
            return
        order = free[np.argsort(-node.z[free], kind="stable")]
        subset = tuple(sorted(int(i) for i in np.concatenate([f1, order[:k_free]])))
        solved = self._solve_subset(subset)
        if solved is None:
            return
        obj, w_s = solved
        w = np.zeros(self.n)
        w[np.array(subset, dtype=int)] = w_s
        z = np.zeros(self.n)
        z[np.array(subset, dtype=int)] = 1.0
        self._update_incumbent(obj, w, z, "heuristic", node.id)

    # -- search -----------------------------------------------------------

    def _prune_margin(self) -> float:
        # looser of the absolute and relative tolerances, the usual
        # mixed-integer convention; accuracy stays far inside the 1e-6
        # objective tolerance the oracle comparisons use
        if self.inc_obj is None:
            return 0.0
        return max(_PRUNE_CAP, GAP_TOL * abs(self.inc_obj))

    def _is_integral(self, node: _Node) -> bool:
        free = np.flatnonzero(node.fixed == 0)
        if len(free) == 0:
            return True
        frac = np.abs(node.z[free] - np.round(node.z[free]))
        return float(frac.max()) <= _INTEGRALITY_TOL

    def _branch_asset(self, node: _Node) -> int:
        free = np.flatnonzero(node.fixed == 0)
        frac = np.minimum(node.z[free], 1.0 - node.z[free])
        return int(free[int(np.argmax(frac))])

    def _seed_incumbent(self) -> None:
        if self.warm_subset is None or len(self.warm_subset) != self.spec.K:
            return
        subset = tuple(sorted(int(i) for i in self.warm_subset))
        solved = self._solve_subset(subset)
        if solved is None:
            return
        obj, w_s = solved
        w = np.zeros(self.n)
        w[np.array(subset, dtype=int)] = w_s
        z = np.zeros(self.n)
        z[np.array(subset, dtype=int)] = 1.0
        self._update_incumbent(obj, w, z, "warm_start", -1)

    def _probe_fixings(self) -> np.ndarray:
        """Bound-based variable fixing at the root: force each asset in, and
        if even that relaxation cannot beat the incumbent by the absolute
        pruning slack, the asset can never appear in a better solution and
        is fixed out of the whole search. Probe relaxations count toward
        the node budget like ordinary nodes."""
        fixed = np.zeros(self.n, dtype=np.int8)
        if self.inc_obj is None:
            return fixed
        for asset in range(self.n):
            if self.explored + 1 > self.node_budget:
                break
            trial = fixed.copy()
            trial[asset] = 1
            self.explored += 1
            solved = self._solve_relaxation(trial)
            # fixed absolute slack: exclusion error stays within 1e-9 even
            # when the early incumbent is far from optimal
            if solved is None or solved[0] >= self.inc_obj - _PRUNE_CAP:
                fixed[asset] = -1
                self._log({"event": "probe", "asset": self.moments.tickers[asset],
                           "fixed_out": True,
                           "bound": None if solved is None else solved[0]})
        return fixed

    def solve(self) -> CardinalitySolution:
        t0 = time.perf_counter()
        self._seed_incumbent()
        root = self._make_node(np.zeros(self.n, dtype=np.int8), None, 0)
        if root is None:
            raise InfeasibleError("no selection of K assets can reach the return target")
        heap: list[tuple[float, int, _Node]] = []
        current: _Node | None = root
        budget_stop = False
        if not self._is_integral(root):
            self._rounding_heuristic(root)
            probed = self._probe_fixings()
            if probed.any():
                if int((probed >= 0).sum()) < self.spec.K:
                    # everything else is fixed out: the incumbent is optimal
                    # within the probing slack
                    current = None
                else:
                    # a None here means the survivors cannot reach the
                    # target, so again the incumbent already won
                    current = self._make_node(probed, root.id, 1)
        while True:
            if current is None:
                if not heap:
                    break
                current = heapq.heappop(heap)[2]
            node, current = current, None
            margin = self._prune_margin()
            if self.inc_obj is not None and node.bound >= self.inc_obj - margin:
                self._log_node(node, "pruned")
                continue
            if self._is_integral(node):
                self._update_incumbent(node.bound, node.w, node.z, "node", node.id)
                self._log_node(node, "integral", objective=node.bound)
                continue
            self._rounding_heuristic(node)
            if self.explored + 2 > self.node_budget:
                budget_stop = True
                heap.append((node.bound, -1, node))  # still open; counts toward the gap
                break
            asset = self._branch_asset(node)
            self._log_node(node, "branched",
                           branch_asset=self.moments.tickers[asset])
            children = []
            for value in (1, -1):
                fixed = node.fixed.copy()
                fixed[asset] = value
                child = self._make_node(fixed, node.id, node.depth + 1)
                if child is not None:
                    children.append(child)
            children.sort(key=lambda nd: nd.bound)
            if children:
                current = children[0]
                for other in children[1:]:
                    heapq.heappush(heap, (other.bound, next(self._seq), other))

        wall = time.perf_counter() - t0
        if self.inc_obj is None:
            if budget_stop:
                raise BudgetError(
                    f"node budget {self.node_budget} exhausted with no incumbent"
                )
            raise InfeasibleError("no selection of K assets can reach the return target")

        open_bounds = [item[0] for item in heap]
        lower_bound = min(open_bounds, default=self.inc_obj)
        lower_bound = min(lower_bound, self.inc_obj)
        gap = max(0.0, (self.inc_obj - lower_bound) / max(abs(self.inc_obj), 1e-12))
        truncated = budget_stop and gap > GAP_TOL
        self._log({"event": "done", "incumbent": self.inc_obj, "gap": gap,
                   "nodes": self.explored, "truncated": truncated})

        stats = BnBStats(self.explored, self.incumbent_updates, wall)
        portfolio = Portfolio(self.moments.tickers, self.inc_w)
        solution = CardinalitySolution(
            portfolio=portfolio,
            z=tuple(int(v) for v in self.inc_z),
            epsilon=self.epsilon,
            variance=self.inc_obj,
            optimality_gap=gap,
            truncated=truncated,
            stats=stats,
        )
        self._validate(solution)
        return solution

    def _validate(self, solution: CardinalitySolution) -> None:
        if solution.K != self.spec.K:
            raise DataError(f"solution holds {solution.K} assets, expected {self.spec.K}")
        held = np.array(solution.z, dtype=bool)
        w = solution.portfolio.weights[held]
        lo, hi = self.spec.bounds.lower, self.spec.bounds.upper
        if w.size and ((w < lo - qp.FEASIBILITY_TOL).any() or (w > hi + qp.FEASIBILITY_TOL).any()):
            raise DataError("held weights violate the holding bounds")
        if lo > 0 and cardinality_of(solution.portfolio.weights) != self.spec.K:
            raise DataError("nonzero-weight count does not match the cardinality")


def solve_cc_qp(moments: Moments, spec: CardinalitySpec, epsilon: float | None,
                node_budget: int = NODE_BUDGET, node_log=None,
                warm_subset: tuple[int, ...] | None = None) -> CardinalitySolution:
    """Global optimum of the exact-K problem, proven by branch-and-bound.

    ``warm_subset`` optionally seeds the incumbent with a known K-subset
    before the search starts. On node-budget exhaustion the best incumbent
    is returned with its gap and ``truncated=True`` rather than raising, so
    long sweeps degrade loudly but usefully.
    """
    return _BranchAndBound(moments, spec, epsilon, node_budget, node_log,
                           warm_subset).solve()


def brute_force_cc(moments: Moments, spec: CardinalitySpec, epsilon: float | None,
                   max_subsets: int = SUBSET_BUDGET) -> CardinalitySolution:
    """Reference answer by enumerating every K-subset and solving its QP."""
    n, K = moments.n_assets, spec.K
    if K > n:
        raise InfeasibleError(f"cardinality {K} exceeds the {n}-asset universe")
    total = math.comb(n, K)
    if total > max_subsets:
        raise BudgetError(f"{total} subsets exceed the enumeration budget {max_subsets}")
    best_obj = None
    best = None
    for subset in itertools.combinations(range(n), K):
        idx = np.array(subset, dtype=int)
        mu_s = moments.mu[idx]
        Q_s = moments.Q[np.ix_(idx, idx)]
        try:
            w_s, _ = optimizer.solve_bounded_qp(mu_s, Q_s, spec.bounds, epsilon)
        except InfeasibleError:
            continue
        obj = float(w_s @ Q_s @ w_s)
        if best_obj is None or obj < best_obj:
            best_obj = obj
            best = (subset, w_s)
    if best is None:
        raise InfeasibleError("no selection of K assets can reach the return target")
    subset, w_s = best
    w = np.zeros(n)
    w[np.array(subset, dtype=int)] = w_s
    z = tuple(1 if i in set(subset) else 0 for i in range(n))
    return CardinalitySolution(
        portfolio=Portfolio(moments.tickers, w),
        z=z,
        epsilon=epsilon,
        variance=best_obj,
        optimality_gap=0.0,
    )


def max_return_exact_k(moments: Moments, spec: CardinalitySpec) -> tuple[np.ndarray, float]:
    """Best achievable return holding exactly K assets: pick the top-K
    expected returns (uniform bounds make the exchange argument exact) and
    fill greedily within the subset."""
    idx = np.sort(np.argsort(-moments.mu, kind="stable")[:spec.K])
    w_s = optimizer.greedy_max_return(moments.mu[idx], spec.bounds)
    w = np.zeros(moments.n_assets)
    w[idx] = w_s
    return w, float(moments.mu @ w)


def cc_frontier(moments: Moments, spec: CardinalitySpec, num_points: int = 100,
                workers: int = 1, node_budget: int = NODE_BUDGET) -> Frontier:
    """Efficient frontier of the exact-K problem on a linear epsilon grid.

    Every grid point is an independent branch-and-bound solve, so the
    result does not depend on the worker count; truncated points carry
    their reported gap.
    """
    if num_points < 2:
        raise DataError("a frontier needs at least two points")
    base = solve_cc_qp(moments, spec, None, node_budget=node_budget)
    lo = float(moments.mu @ base.portfolio.weights)
    _, hi = max_return_exact_k(moments, spec)
    grid = np.linspace(lo, max(hi, lo), num_points)

    def point(eps: float) -> FrontierPoint:
        sol = solve_cc_qp(moments, spec, float(eps), node_budget=node_budget)
        return FrontierPoint(
            epsilon=float(eps),
            portfolio=sol.portfolio,
            achieved_return=float(moments.mu @ sol.portfolio.weights),
            variance=sol.variance,
            gap=sol.optimality_gap,
            truncated=sol.truncated,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(point, grid))
    else:
        points = [point(float(e)) for e in grid]
    return Frontier(points=tuple(points), bounds=spec.bounds, moments=moments)
