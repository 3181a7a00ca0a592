"""Dense active-set solver for convex quadratic programs.

Solves

    min  1/2 x'Px + q'x
    s.t. Ax = b
         Gx <= h

for symmetric positive-semidefinite P. This is the single engine behind
every portfolio solve in the package: the bound-constrained mean-variance
program, the max-return feasibility subproblems, and the continuous
relaxations inside branch-and-bound.

The method is the textbook primal active-set iteration: keep a working set
of inequality rows treated as equalities, solve the resulting equality-
constrained subproblem through its KKT system, take the longest feasible
step toward that minimizer, and add the blocking row (or drop the row with
the most negative multiplier once the subproblem is stationary). Because a
small ridge is added to P before factorization, every subproblem is
strictly convex, which keeps the KKT matrices nonsingular and makes any
blocking row automatically independent of the current working set. All
tie-breaks are by lowest row index, so the iteration is deterministic.

The ridge perturbs the reported optimum by O(ridge), far below the 1e-6
certificate tolerance; residuals are always measured against the original
P, never the regularized one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InfeasibleError

FEASIBILITY_TOL = 1e-9
KKT_TOL = 1e-6
MAX_ITERATIONS = 10_000
RIDGE = 1e-10


@dataclass(frozen=True)
class KktResiduals:
    """Optimality certificate for one QP solve, measured on the original data."""

    stationarity: float
    primal: float
    dual: float
    complementarity: float

    @property
    def max(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)

    def ok(self, tol: float = KKT_TOL) -> bool:
        return self.max <= tol


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    objective: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    kkt: KktResiduals
    iterations: int


def kkt_residuals(P, q, A, b, G, h, x, nu, lam) -> KktResiduals:
    """Stationarity, primal/dual feasibility and complementarity residuals."""
    grad = P @ x + q
    if A.size:
        grad = grad + A.T @ nu
    if G.size:
        grad = grad + G.T @ lam
    stationarity = float(np.abs(grad).max()) if grad.size else 0.0
    primal = 0.0
    if A.size:
        primal = max(primal, float(np.abs(A @ x - b).max()))
    slack = np.zeros(0)
    if G.size:
        slack = G @ x - h
        primal = max(primal, float(max(0.0, slack.max())))
    dual = float(max(0.0, -lam.min())) if lam.size else 0.0
    comp = float(np.abs(lam * slack).max()) if lam.size else 0.0
    return KktResiduals(stationarity, primal, dual, comp)


def _as_2d(M, n):
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((0, n))
    return np.atleast_2d(M)


def solve_qp(P, q, A, b, G, h, x0, *, max_iter: int = MAX_ITERATIONS,
             feastol: float = FEASIBILITY_TOL, ridge: float = RIDGE) -> QpResult:
    """Run the active-set iteration from the feasible point ``x0``.

    Raises InfeasibleError if ``x0`` violates the constraints by more than
    ``feastol`` and ConvergenceError if the iteration budget runs out.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    A = _as_2d(A, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    G = _as_2d(G, n)
    h = np.asarray(h, dtype=float).reshape(-1)
    x = np.array(x0, dtype=float)

    if A.size and np.abs(A @ x - b).max() > feastol:
        raise InfeasibleError("start point violates equality constraints")
    if G.size and (G @ x - h).max() > feastol:
        raise InfeasibleError("start point violates inequality constraints")

    scale = max(1.0, float(np.abs(P).max()) if P.size else 1.0)
    P_eff = P + (ridge * scale) * np.eye(n)
    m_eq = A.shape[0]
    m_in = G.shape[0]
    working: list[int] = []
    in_working = np.zeros(m_in, dtype=bool)
    steptol = 1e-12

    for it in range(1, max_iter + 1):
        C = np.vstack([A, G[working]]) if working else A
        k = C.shape[0]
        g = P_eff @ x + q

        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = P_eff
        if k:
            kkt[:n, n:] = C.T
            kkt[n:, :n] = C
        rhs = np.concatenate([-g, np.zeros(k)])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        p = sol[:n]
        y = sol[n:]

        if np.abs(p).max(initial=0.0) <= steptol * max(1.0, np.abs(x).max(initial=0.0)):
            lam_w = y[m_eq:]
            if lam_w.size == 0 or lam_w.min() >= -feastol:
                nu = y[:m_eq]
                lam = np.zeros(m_in)
                if working:
                    lam[working] = np.maximum(lam_w, 0.0)
                obj = float(0.5 * x @ (P @ x) + q @ x)
                res = kkt_residuals(P, q, A, b, G, h, x, nu, lam)
                return QpResult(x, obj, nu, lam, res, it)
            # drop the most negative multiplier; lowest row index on ties
            worst = int(np.argmin(lam_w))
            in_working[working[worst]] = False
            del working[worst]
            continue

        # ratio test over rows not in the working set
        alpha = 1.0
        block = -1
        if m_in:
            Gp = G @ p
            candidates = ~in_working & (Gp > 1e-14)
            if candidates.any():
                slack = np.maximum(h - G @ x, 0.0)
                ratios = np.full(m_in, np.inf)
                ratios[candidates] = slack[candidates] / Gp[candidates]
                best = int(np.argmin(ratios))
                if ratios[best] < 1.0:
                    alpha = float(ratios[best])
                    block = best
        x = x + alpha * p
        if block >= 0:
            working.append(block)
            working.sort()
            in_working[block] = True

    raise ConvergenceError(f"active-set solver did not converge in {max_iter} iterations")


def feasible_start_simplex(lower: np.ndarray, upper: np.ndarray, total: float = 1.0) -> np.ndarray:
    """A point with lower <= x <= upper and sum(x) = total, spread over the box.

    Starts every coordinate at its lower bound and distributes the leftover
    budget proportionally to the box widths, which lands strictly inside the
    box whenever the budget allows it.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    lo_sum = lower.sum()
    hi_sum = upper.sum()
    if lo_sum > total + FEASIBILITY_TOL or hi_sum < total - FEASIBILITY_TOL:
        raise InfeasibleError(
            f"box [{lo_sum:.6g}, {hi_sum:.6g}] cannot hold a budget of {total:.6g}"
        )
    width = upper - lower
    span = width.sum()
    if span <= 0.0:
        return lower.copy()
    x = lower + (total - lo_sum) * (width / span)
    return np.clip(x, lower, upper)
