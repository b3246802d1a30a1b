"""Simultaneous-move structure: operator best response to a fixed contract and the H test."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .contract import contract_for_cost, server_cost_at_threshold, server_threshold_interval
from .model import (
    INF,
    Contract,
    DemandDistribution,
    NumericalInfeasibility,
    PriceSchedule,
    Scenario,
    SolveReport,
    operator_profit,
)
from .pricing import (
    PROFIT_RTOL,
    levelled_optimum,
    optimal_demand_distribution,
    optimal_operator_solution,
    prices_for,
)

FIXED_POINT_RTOL = 1e-9
MAX_CYCLE_STEPS = 100


@dataclass(frozen=True, eq=False)
class OperatorResponse:
    """Operator's profit-maximizing prices against a fixed contract."""

    prices: PriceSchedule
    demand: DemandDistribution
    selected_types: NDArray
    common_cost: float
    profit: float
    sustainable: bool = True

    def __iter__(self):
        return iter((self.prices, self.selected_types, self.common_cost))


def _idle_response(scenario: Scenario, sustainable: bool) -> OperatorResponse:
    T = scenario.num_slots
    prices = PriceSchedule.uniform(T, scenario.price_cap)
    demand = DemandDistribution.empty(T)
    h = scenario.background
    c = float(np.min(scenario.price_cap + scenario.beta * h * h))
    return OperatorResponse(prices, demand, np.array([], dtype=np.int64), c,
                            operator_profit(scenario, prices, demand), sustainable)


def own_item_budgets(scenario: Scenario, contract: Contract) -> NDArray:
    """Surplus ``r_j - theta_j d_j`` of each type's own item; ``-inf`` for zero items."""
    budgets = contract.rewards - scenario.thetas * contract.data
    offered = (contract.data > 0) | (contract.rewards > 0)
    return np.where(offered, budgets, -INF)


def operator_best_response(scenario: Scenario, contract: Contract) -> OperatorResponse:
    """Best prices when each type joins iff its budget covers the common cost.

    A type's budget is the surplus of its own item (see :func:`own_item_budgets`);
    a type offered the zero item cannot be served.
    Served sets are budget-ordered prefixes: serving ``X`` needs a common cost
    between the largest budget left out and the smallest budget served.
    Profit ties go to the larger set.
    """
    budgets = own_item_budgets(scenario, contract)
    h = scenario.background
    idle_cost = float(np.min(scenario.price_cap + scenario.beta * h * h))
    best: OperatorResponse | None = None
    if budgets.max() < idle_cost:
        best = _idle_response(scenario, True)
    order = np.argsort(-budgets, kind="stable")
    # indifferent types join, as the threshold type does under a binding IR
    eligible = [j for j in order if budgets[j] >= 0]
    scale = max(1.0, float(np.abs(budgets[np.isfinite(budgets)]).max(initial=0.0)))
    for k in range(1, len(eligible) + 1):
        if k < len(eligible) and budgets[eligible[k - 1]] - budgets[eligible[k]] <= 1e-12 * scale:
            continue
        served = np.array(sorted(eligible[:k]), dtype=np.int64)
        rest = np.setdiff1d(np.arange(scenario.num_types), served)
        cap = float(budgets[served].min())
        floor = max(0.0, float(budgets[rest].max())) if rest.size else 0.0
        m = float(scenario.counts[served].sum())
        sol = levelled_optimum(scenario, m, cap, floor)
        if sol is None:
            continue
        if best is None or sol.profit >= best.profit - PROFIT_RTOL * max(1.0, abs(best.profit)):
            prices = prices_for(scenario, sol.n, sol.common_cost)
            demand = DemandDistribution(sol.n)
            best = OperatorResponse(prices, demand, served, sol.common_cost,
                                    operator_profit(scenario, prices, demand))
    return best if best is not None else _idle_response(scenario, False)


def h_statistic(scenario: Scenario, vertical: SolveReport | None = None) -> dict[str, Any]:
    """Components of the horizontal existence test at the vertical threshold.

    ``server_max`` is the largest common cost at which the server still picks
    the vertical threshold; ``band_max`` is the larger of the two price-cap
    bounds on the common cost for the cost-minimizing demand. The no-unused-
    slot bound is dropped when every slot is used.
    """
    vertical = vertical if vertical is not None else optimal_operator_solution(scenario)
    x = vertical.threshold
    if x == 0:
        raise NumericalInfeasibility("vertical solution has no participation", {"threshold": 0})
    _, server_max = server_threshold_interval(scenario, x)
    m = scenario.users_up_to(x)
    b, p0 = scenario.beta, scenario.price_cap
    h = scenario.background
    if b > 0:
        kkt = optimal_demand_distribution(scenario, m)
        n = kkt.n
    else:
        n = np.maximum(vertical.demand.counts, 0.0)
    used = n > 0
    bounds = [p0 + b * float(((n[used] + h[used]) ** 2).min())]
    if (~used).any():
        bounds.append(p0 + b * float((h[~used] ** 2).min()))
    band_max = max(bounds)
    value = INF if math.isinf(server_max) else server_max - band_max
    return {
        "H": value,
        "threshold": x,
        "server_max": server_max,
        "band_max": band_max,
        "proviso_holds": not vertical.notes.get("cap_binds", False),
    }


def compute_H(scenario: Scenario, vertical: SolveReport | None = None) -> float:
    """Sign statistic for existence of the simultaneous-move equilibrium."""
    return float(h_statistic(scenario, vertical)["H"])


@dataclass(frozen=True, eq=False)
class HorizontalResult:
    exists: bool
    report: SolveReport | None
    H: float
    fixed_point: bool
    details: dict[str, Any] = field(default_factory=dict)

    def __iter__(self):
        return iter((self.exists, self.report))


def mutual_best_response(scenario: Scenario, vertical: SolveReport) -> dict[str, Any]:
    """Whether neither leader gains by deviating from the vertical outcome."""
    c = vertical.common_cost
    costs = [server_cost_at_threshold(scenario, x, c).cost for x in range(1, scenario.num_types + 1)]
    server_best = min(costs)
    # nobody moves first here, so the server breaks ties its own way
    _, server_x = contract_for_cost(scenario, c)
    server_ok = (
        server_x == vertical.threshold
        and vertical.server_cost <= server_best + FIXED_POINT_RTOL * max(1.0, abs(server_best))
    )
    response = operator_best_response(scenario, vertical.contract)
    v = vertical.operator_profit
    operator_ok = response.profit <= v + FIXED_POINT_RTOL * max(1.0, abs(v))
    return {
        "server_ok": bool(server_ok),
        "server_gap": vertical.server_cost - server_best,
        "server_threshold": server_x,
        "operator_ok": bool(operator_ok),
        "operator_gap": response.profit - v,
        "operator_response_types": response.selected_types.tolist(),
    }


def best_response_cycle(scenario: Scenario, contract: Contract, steps: int = MAX_CYCLE_STEPS) -> dict[str, Any]:
    """Alternate operator and server best responses from ``contract``; diagnostic only."""
    seen: dict[tuple, int] = {}
    trail = []
    for step in range(steps):
        response = operator_best_response(scenario, contract)
        contract, x = contract_for_cost(scenario, response.common_cost)
        state = (len(response.selected_types), x, round(response.common_cost, 9))
        trail.append({"served": state[0], "server_threshold": x, "common_cost": response.common_cost})
        if state in seen:
            return {"cycle_start": seen[state], "period": step - seen[state], "trail": trail}
        seen[state] = step
    return {"cycle_start": None, "period": None, "trail": trail}


def check_horizontal_equilibrium(scenario: Scenario) -> HorizontalResult:
    """Existence verdict (``H >= 0``) with the vertical outcome when it exists.

    The mutual-best-response check is always run and reported as
    ``fixed_point``; when ``H < 0`` a bounded best-response iteration is
    recorded in ``details['cycle']``.
    """
    vertical = optimal_operator_solution(scenario)
    if vertical.threshold == 0:
        return HorizontalResult(False, None, -INF, False, {"reason": "no participation"})
    stats = h_statistic(scenario, vertical)
    check = mutual_best_response(scenario, vertical)
    fixed = check["server_ok"] and check["operator_ok"]
    details = {**stats, **check}
    exists = stats["H"] >= 0
    if not exists:
        details["cycle"] = best_response_cycle(scenario, vertical.contract)
        return HorizontalResult(False, None, stats["H"], fixed, details)
    report = dataclasses.replace(vertical, mechanism="IJD-horizontal", notes={**vertical.notes, **stats})
    return HorizontalResult(True, report, stats["H"], fixed, details)
