"""Network operator's problem: demand distribution and dynamic prices.

The operator picks how many users to serve and the prices that spread them
over slots. Users in used slots all face the same cost ``C`` (price plus
congestion), so revenue is ``m*C`` minus the congestion users bear, and the
operator's choice reduces to a demand vector ``n`` and the level ``C``.

``C`` is bounded above by a cap coming from the server (or from user budgets),
and by ``p0 + beta*L**2`` where ``L`` is the smallest total usage ``n_t + h_t``
over all slots: no price may exceed ``p0``, so the cheapest slot to crowd into
limits what users can be charged. For a fixed ``L`` the best ``n`` is a convex
box-constrained allocation; :func:`levelled_optimum` scans ``L``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from . import kernels
from .contract import contract_for_threshold, cost_lines, server_threshold_interval
from .model import (
    INF,
    Contract,
    DemandDistribution,
    NumericalInfeasibility,
    PriceSchedule,
    Scenario,
    ScenarioError,
    SolveReport,
    operator_profit,
    server_cost,
)

log = logging.getLogger(__name__)

PROFIT_RTOL = 1e-9
_GRID = 48
_GOLDEN_ITERS = 80


@dataclass(frozen=True, eq=False)
class KktSolution:
    """Unconstrained cost-minimizing demand for a fixed number of users."""

    lam: float
    selected: NDArray
    n: NDArray
    residual: float

    def stationarity(self, scenario: Scenario) -> NDArray:
        """Per-slot first-order residual on the selected slots."""
        b, g = scenario.beta, scenario.gamma
        h = scenario.background[self.selected]
        n = self.n[self.selected]
        return 3 * b * n * n + 2 * (2 * b * h + g) * n + (b * h * h + 2 * g * h + self.lam)


def slot_keys(scenario: Scenario) -> NDArray:
    """Marginal network cost of the first user in each slot, ``h(beta h + 2 gamma)``."""
    h = scenario.background
    return h * (scenario.beta * h + 2.0 * scenario.gamma)


def network_cost(scenario: Scenario, n: NDArray) -> float:
    """Congestion borne by users plus the operator's own cost over all slots."""
    y = n + scenario.background
    return float(scenario.beta * np.dot(n, y * y) + scenario.gamma * np.dot(y, y))


def _solve_multiplier(a: NDArray, rhs: float, lam_hi: float) -> float:
    """Root of the decreasing map ``sum(sqrt(a - 3 beta lam)) - rhs``, with ``a`` pre-scaled."""

    def f(lam):
        return float(np.sqrt(np.maximum(a - lam, 0.0)).sum()) - rhs

    if f(lam_hi) > 0:
        return math.nan
    step = max(1.0, abs(lam_hi))
    lam_lo = lam_hi - step
    while f(lam_lo) < 0:
        step *= 2.0
        lam_lo = lam_hi - step
    for _ in range(400):
        mid = 0.5 * (lam_lo + lam_hi)
        if mid <= lam_lo or mid >= lam_hi:
            break
        if f(mid) > 0:
            lam_lo = mid
        else:
            lam_hi = mid
    return 0.5 * (lam_lo + lam_hi)


def optimal_demand_distribution(scenario: Scenario, num_users: float) -> KktSolution:
    """Cheapest split of ``num_users`` over slots, ignoring price limits.

    Slots are admitted in ascending order of :func:`slot_keys` (ties together);
    for each prefix the multiplier is found by bisection and the prefix is
    accepted when the multiplier separates admitted from excluded keys.
    """
    b, g = scenario.beta, scenario.gamma
    if b <= 0:
        raise ScenarioError("beta", "must be positive here; use water_filling")
    if not num_users > 0:
        raise ScenarioError("num_users", "must be positive")
    h = scenario.background
    kappa = slot_keys(scenario)
    order = np.argsort(kappa, kind="stable")
    scale = max(1.0, float(np.abs(kappa).max()))
    accepted = []
    tried = []
    for k in range(1, h.size + 1):
        if k < h.size and kappa[order[k]] - kappa[order[k - 1]] <= 1e-12 * scale:
            continue
        q = np.sort(order[:k])
        disc0 = (b * h[q] - g) ** 2
        # work in u = 3 beta lam so the bracket scale is well conditioned
        rhs = 3 * b * num_users + float((2 * b * h[q] + g).sum())
        u = _solve_multiplier(disc0, rhs, float(disc0.min()))
        lam = u / (3 * b)
        tried.append({"prefix": q.tolist(), "lam": lam})
        if math.isnan(lam):
            continue
        n = np.zeros_like(h)
        disc = np.maximum(disc0 - 3 * b * lam, 0.0)
        n[q] = -(kappa[q] + lam) / (np.sqrt(disc) + 2 * b * h[q] + g)
        outside = np.setdiff1d(np.arange(h.size), q)
        tol = 1e-9 * max(scale, abs(lam))
        if kappa[q].max() > -lam + tol:
            continue
        if outside.size and kappa[outside].min() < -lam - tol:
            continue
        if np.any(n[q] <= 0):
            continue
        resid = num_users - n.sum()
        n[q] += resid / q.size
        accepted.append(KktSolution(lam, q, n, float(n.sum() - num_users)))
    if not accepted:
        raise NumericalInfeasibility("no slot prefix satisfies the optimality conditions", {"tried": tried})
    if len(accepted) > 1:
        log.warning("%d slot prefixes pass the optimality conditions; keeping the cheapest", len(accepted))
    return min(accepted, key=lambda s: network_cost(scenario, s.n))


@dataclass(frozen=True, eq=False)
class LevelledSolution:
    level: float
    common_cost: float
    n: NDArray
    profit: float
    lam: float


def _at_level(scenario: Scenario, m: float, level: float, cap: float) -> LevelledSolution | None:
    b, g, p0 = scenario.beta, scenario.gamma, scenario.price_cap
    h = scenario.background
    C = min(p0 + b * level * level, cap)
    if b * level * level > C * (1 + 1e-15):
        return None
    u = math.sqrt(C / b)
    hi = np.where(h < u, u - h, 0.0)
    lo = np.minimum(np.maximum(level - h, 0.0), hi)
    n, lam = kernels.box_allocate(h, b, g, lo, hi, m)
    if n is None:
        return None
    return LevelledSolution(level, C, n, m * C - network_cost(scenario, n), lam)


def _golden(f, a: float, c: float, iters: int = _GOLDEN_ITERS):
    invphi = (math.sqrt(5) - 1) / 2
    x1 = c - invphi * (c - a)
    x2 = a + invphi * (c - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if c - a <= 1e-13 * max(1.0, abs(c)):
            break
        if f1 >= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - invphi * (c - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (c - a)
            f2 = f(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def levelled_optimum(
    scenario: Scenario, m: float, cap: float, floor: float = 0.0
) -> LevelledSolution | None:
    """Most profitable way to serve ``m`` users with common cost in ``[floor, cap]``.

    Returns ``None`` when no demand vector and price schedule within
    ``[0, p0]`` realize a common cost in that range.
    """
    b, p0 = scenario.beta, scenario.price_cap
    h = scenario.background
    if m <= 0 or cap < floor:
        return None
    if b == 0:
        n, v, C = water_filling(scenario, m, cap)
        if C < max(floor, 0.0):
            return None
        return LevelledSolution(v, C, n.counts, m * C - network_cost(scenario, n.counts), math.nan)
    min_h = float(h.min())
    lo_level = max(min_h, math.sqrt(max(0.0, floor - p0) / b))
    hi_level = min(kernels.water_level(h, m), max(math.sqrt(max(0.0, cap - p0) / b), min_h))
    if lo_level > hi_level:
        if lo_level - hi_level > 1e-12 * max(1.0, hi_level):
            return None
        lo_level = hi_level

    cache: dict[float, LevelledSolution | None] = {}

    def solve(level):
        if level not in cache:
            cache[level] = _at_level(scenario, m, level, cap)
        return cache[level]

    def value(level):
        sol = solve(level)
        return -INF if sol is None else sol.profit

    grid = np.linspace(lo_level, hi_level, _GRID)
    free, _ = kernels.box_allocate(h, b, scenario.gamma, np.zeros_like(h), np.full_like(h, INF), m)
    extra = [float(np.clip((free + h).min(), lo_level, hi_level))] if free is not None else []
    points = sorted(set(grid.tolist() + extra))
    vals = [value(x) for x in points]
    best = max(range(len(points)), key=lambda i: vals[i])
    if not math.isfinite(vals[best]):
        return None
    # refine around the two best local maxima of the scan
    peaks = [i for i in range(len(points))
             if math.isfinite(vals[i])
             and (i == 0 or vals[i] >= vals[i - 1]) and (i == len(points) - 1 or vals[i] >= vals[i + 1])]
    peaks = sorted(peaks, key=lambda i: -vals[i])[:2]
    for i in peaks:
        a, c = points[max(i - 1, 0)], points[min(i + 1, len(points) - 1)]
        if c > a:
            _golden(value, a, c)
    feasible = [s for s in cache.values() if s is not None]
    return max(feasible, key=lambda s: s.profit)


def water_filling(
    scenario: Scenario, num_users: float, cap: float = INF
) -> tuple[DemandDistribution, float, float]:
    """Demand, water level and uniform price for congestion-free users.

    Users fill the least-loaded slots up to a common total usage ``v``. Every
    used slot carries the same price, the highest allowed: ``min(p0, cap)``.
    """
    h = scenario.background
    v = kernels.water_level(h, num_users)
    n = np.maximum(v - h, 0.0) if num_users > 0 else np.zeros_like(h)
    return DemandDistribution(n), float(v), float(min(scenario.price_cap, cap))


def prices_for(scenario: Scenario, n: NDArray, common_cost: float) -> PriceSchedule:
    """Prices equalizing cost ``common_cost`` on used slots; ``p0`` elsewhere."""
    p0 = scenario.price_cap
    y = n + scenario.background
    p = np.where(n > 0, common_cost - scenario.beta * y * y, p0)
    return PriceSchedule(np.clip(p, 0.0, p0))


@dataclass(frozen=True)
class Candidate:
    """Operator's best outcome when serving the users of the ``x`` cheapest types."""

    x: int
    users: float
    floor: float
    cap: float
    solution: LevelledSolution | None
    notes: dict[str, Any] = field(default_factory=dict)


def closed_form_band(scenario: Scenario, m: float, cap: float, floor: float) -> dict[str, Any]:
    """Common-cost band of the unconstrained demand and the profit at its top.

    This is the textbook construction: keep the cost-minimizing demand and
    charge the highest admissible common cost. It is always feasible, so it
    bounds :func:`levelled_optimum` from below; the bound can be strict even
    when the server cap is slack, since shifting users toward busier slots
    raises the least-loaded slot's usage and with it the chargeable cost.
    """
    b, p0 = scenario.beta, scenario.price_cap
    h = scenario.background
    kkt = optimal_demand_distribution(scenario, m)
    q = kkt.selected
    y = kkt.n + h
    off = np.setdiff1d(np.arange(h.size), q)
    band_hi = min(p0 + b * float((y[q] ** 2).min()), p0 + b * float((h[off] ** 2).min()) if off.size else INF)
    band_lo = b * float((y[q] ** 2).max())
    top = min(band_hi, cap)
    ok = top >= max(band_lo, floor)
    profit = m * top - network_cost(scenario, kkt.n) if ok else -INF
    return {"band_lo": band_lo, "band_hi": band_hi, "common_cost": top if ok else math.nan,
            "profit": profit, "cap_binds": bool(ok and cap < band_hi), "selected": q.tolist()}


def vertical_candidates(scenario: Scenario) -> list[Candidate]:
    lines = cost_lines(scenario)
    out = []
    for x in range(1, scenario.num_types + 1):
        lo, hi = server_threshold_interval(scenario, x, lines)
        m = scenario.users_up_to(x)
        if lo > hi:
            out.append(Candidate(x, m, lo, hi, None))
            continue
        sol = levelled_optimum(scenario, m, hi, lo)
        notes = {}
        if scenario.beta > 0:
            notes["closed_form"] = closed_form_band(scenario, m, hi, lo)
        out.append(Candidate(x, m, lo, hi, sol, notes))
    return out


def no_participation_report(scenario: Scenario, mechanism: str = "IJD", **notes) -> SolveReport:
    T = scenario.num_slots
    prices = PriceSchedule.uniform(T, scenario.price_cap)
    demand = DemandDistribution.empty(T)
    h = scenario.background
    c = float(np.min(scenario.price_cap + scenario.beta * h * h))
    return SolveReport(
        scenario, Contract.empty(scenario.num_types), prices, demand, 0, c, INF,
        operator_profit(scenario, prices, demand), np.zeros(scenario.num_types), mechanism, dict(notes),
    )


def report_for(
    scenario: Scenario, x: int, contract: Contract, n: NDArray, common_cost: float,
    mechanism: str = "IJD", **notes,
) -> SolveReport:
    """Assemble a report where the ``x`` cheapest types take their own items at ``common_cost``."""
    prices = prices_for(scenario, n, common_cost)
    demand = DemandDistribution(n)
    payoffs = np.zeros(scenario.num_types)
    payoffs[:x] = contract.rewards[:x] - scenario.thetas[:x] * contract.data[:x] - common_cost
    return SolveReport(
        scenario, contract, prices, demand, x, common_cost, server_cost(scenario, contract),
        operator_profit(scenario, prices, demand), payoffs, mechanism, dict(notes),
    )


def optimal_operator_solution(scenario: Scenario) -> SolveReport:
    """Vertical equilibrium: operator prices first, the server contracts, users respond.

    For each threshold the server's indifference interval bounds the common
    cost; the operator serves the threshold with the largest profit (ties go
    to more users). Returns the no-participation outcome when no threshold
    can be sustained.
    """
    candidates = vertical_candidates(scenario)
    best = None
    for cand in candidates:
        if cand.solution is None:
            continue
        if best is None or cand.solution.profit >= best.solution.profit - PROFIT_RTOL * max(1.0, abs(best.solution.profit)):
            best = cand
    summary = [
        {"x": c.x, "floor": c.floor, "cap": c.cap,
         "profit": c.solution.profit if c.solution else None, **c.notes}
        for c in candidates
    ]
    if best is None:
        return no_participation_report(scenario, candidates=summary)
    sol = best.solution
    contract = contract_for_threshold(scenario, best.x, sol.common_cost)
    return report_for(
        scenario, best.x, contract, sol.n, sol.common_cost,
        candidates=summary, level=sol.level, multiplier=sol.lam,
        cap_binds=bool(sol.common_cost >= best.cap * (1 - 1e-12)),
        server_interval=(best.floor, best.cap),
    )


solve_vertical = optimal_operator_solution
