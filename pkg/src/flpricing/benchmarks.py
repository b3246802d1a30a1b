"""Comparison mechanisms and the metric table.

NJO: the server contracts as if the network were free, the operator then
best-responds to that contract. NDP: the operator must charge one price in
every slot, the server and users respond as in the joint design (IJD).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray

from . import kernels
from .contract import contract_for_cost, contract_for_threshold, cost_lines, server_threshold_interval
from .horizontal import operator_best_response
from .model import (
    Contract,
    DemandDistribution,
    PriceSchedule,
    Scenario,
    SolveReport,
    operator_profit,
    realized_server_cost,
    server_cost,
)
from .pricing import PROFIT_RTOL, no_participation_report, optimal_operator_solution
from .users import wardrop_demand

_CONSISTENCY_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Downstream:
    """Server threshold and user split induced by a price vector."""

    x: int
    common_cost: float
    n: NDArray
    profit: float


def downstream_response(scenario: Scenario, prices: NDArray, lines=None) -> Downstream:
    """Outcome of fixed prices when the server and users respond.

    Threshold ``x`` is consistent when the common cost its users create lies
    in the server's interval for ``x``. Among consistent thresholds the one
    best for the operator is taken (ties to more users); with none there is
    no participation.
    """
    p = np.asarray(prices, dtype=float)
    lines = lines if lines is not None else cost_lines(scenario)
    h = scenario.background
    best = None
    for x in range(1, scenario.num_types + 1):
        lo, hi = server_threshold_interval(scenario, x, lines)
        if lo > hi:
            continue
        c, n = wardrop_demand(scenario, p, scenario.users_up_to(x))
        tol = _CONSISTENCY_RTOL * max(1.0, abs(c))
        if not lo - tol <= c <= hi + tol:
            continue
        y = n + h
        profit = float(np.dot(n, p) - scenario.gamma * np.dot(y, y))
        if best is None or profit >= best.profit - PROFIT_RTOL * max(1.0, abs(best.profit)):
            best = Downstream(x, c, n, profit)
    if best is None:
        return Downstream(0, math.nan, np.zeros_like(h), float(-scenario.gamma * np.dot(h, h)))
    return best


def _report_from_downstream(scenario: Scenario, p: NDArray, out: Downstream, mechanism: str, **notes) -> SolveReport:
    prices = PriceSchedule(p)
    if out.x == 0:
        report = no_participation_report(scenario, mechanism, **notes)
        return SolveReport(report.scenario, report.contract, prices, report.demand, 0,
                           report.common_cost, report.server_cost,
                           operator_profit(scenario, prices, report.demand), report.user_payoffs, mechanism, report.notes)
    contract = contract_for_threshold(scenario, out.x, out.common_cost)
    demand = DemandDistribution(out.n)
    payoffs = np.zeros(scenario.num_types)
    x = out.x
    payoffs[:x] = contract.rewards[:x] - scenario.thetas[:x] * contract.data[:x] - out.common_cost
    return SolveReport(scenario, contract, prices, demand, x, out.common_cost,
                       server_cost(scenario, contract), operator_profit(scenario, prices, demand),
                       payoffs, mechanism, dict(notes))


def _uniform_breakpoints(scenario: Scenario, lines) -> list[float]:
    """Uniform prices at which some threshold's interval is entered or left."""
    p0 = scenario.price_cap
    out = [0.0, p0]
    h = scenario.background
    for x in range(1, scenario.num_types + 1):
        lo, hi = server_threshold_interval(scenario, x, lines)
        if lo > hi:
            continue
        v = kernels.water_level(h, scenario.users_up_to(x))
        shift = scenario.beta * v * v
        for edge in (lo - shift, hi - shift):
            if math.isfinite(edge):
                out.append(min(max(edge, 0.0), p0))
    return out


def solve_ndp(scenario: Scenario, grid_points: int = 1000) -> SolveReport:
    """Best single price for all slots, by grid scan, breakpoints and golden-section refinement."""
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    p0 = scenario.price_cap
    T = scenario.num_slots
    lines = cost_lines(scenario)
    cache: dict[float, Downstream] = {}

    def evaluate(price: float) -> Downstream:
        if price not in cache:
            cache[price] = downstream_response(scenario, np.full(T, price), lines)
        return cache[price]

    candidates = np.linspace(0.0, p0, grid_points).tolist() + _uniform_breakpoints(scenario, lines)
    for price in candidates:
        evaluate(price)
    best_price = max(cache, key=lambda q: cache[q].profit)
    step = p0 / (grid_points - 1)
    a, b = max(0.0, best_price - step), min(p0, best_price + step)
    invphi = (math.sqrt(5) - 1) / 2
    tol = 1e-6 * max(p0, 1e-300)
    while b - a > tol:
        x1 = b - invphi * (b - a)
        x2 = a + invphi * (b - a)
        if evaluate(x1).profit >= evaluate(x2).profit:
            b = x2
        else:
            a = x1
    best_price = max(cache, key=lambda q: (cache[q].profit, q))
    return _report_from_downstream(scenario, np.full(T, best_price), cache[best_price], "NDP",
                                   uniform_price=best_price, evaluations=len(cache))


def solve_njo(scenario: Scenario) -> SolveReport:
    """Contract designed for a free network, then the operator's best response to it."""
    contract, designed = contract_for_cost(scenario, 0.0)
    response = operator_best_response(scenario, contract)
    served = response.selected_types
    weights = np.zeros(scenario.num_types)
    weights[served] = scenario.counts[served]
    c = response.common_cost
    payoffs = np.zeros(scenario.num_types)
    payoffs[served] = contract.rewards[served] - scenario.thetas[served] * contract.data[served] - c
    threshold = int(served.max()) + 1 if served.size else 0
    return SolveReport(
        scenario, contract, response.prices, response.demand, threshold, c,
        realized_server_cost(scenario, contract.data, contract.rewards, weights),
        response.profit, payoffs, "NJO",
        {"designed_threshold": designed, "served_types": served.tolist()},
    )


def _pct(new: float, base: float, lower_is_better: bool) -> float:
    """Improvement of ``new`` over ``base`` in percent of ``|base|``."""
    if math.isinf(base) or math.isinf(new):
        if new == base:
            return 0.0
        better = new < base if lower_is_better else new > base
        return math.inf if better else -math.inf
    if base == 0:
        return 0.0 if new == base else math.copysign(math.inf, (base - new) if lower_is_better else (new - base))
    gain = (base - new) if lower_is_better else (new - base)
    return 100.0 * gain / abs(base)


def compare_mechanisms(scenario: Scenario, provenance: str = "") -> dict[str, Any]:
    """Solve IJD, NJO and NDP; return their reports, metric rows and IJD's percentage gains."""
    solvers = {"IJD": optimal_operator_solution, "NJO": solve_njo, "NDP": solve_ndp}
    reports: dict[str, SolveReport] = {}
    errors: dict[str, str] = {}
    for name, solve in solvers.items():
        try:
            reports[name] = solve(scenario)
        except Exception as exc:  # keep reporting the other mechanisms
            errors[name] = f"{type(exc).__name__}: {exc}"
    rows = []
    ijd = reports.get("IJD")
    for name in solvers:
        r = reports.get(name)
        row: dict[str, Any] = {"mechanism": name}
        if r is None:
            row.update({"server_cost": math.nan, "operator_profit": math.nan, "total_user_payoff": math.nan})
        else:
            row.update({"server_cost": r.server_cost, "operator_profit": r.operator_profit,
                        "total_user_payoff": r.total_user_payoff})
        if ijd is not None and r is not None and name != "IJD":
            row["ijd_server_cost_reduction_pct"] = _pct(ijd.server_cost, r.server_cost, True)
            row["ijd_operator_profit_gain_pct"] = _pct(ijd.operator_profit, r.operator_profit, False)
            row["ijd_user_payoff_gain_pct"] = _pct(ijd.total_user_payoff, r.total_user_payoff, False)
        else:
            row["ijd_server_cost_reduction_pct"] = 0.0 if name == "IJD" else math.nan
            row["ijd_operator_profit_gain_pct"] = 0.0 if name == "IJD" else math.nan
            row["ijd_user_payoff_gain_pct"] = 0.0 if name == "IJD" else math.nan
        row["provenance"] = provenance or scenario.name
        rows.append(row)
    return {"reports": reports, "rows": rows, "errors": errors}
