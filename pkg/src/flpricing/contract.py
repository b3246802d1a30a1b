"""Server's optimal contract: information-rent rewards and the threshold search.

A threshold ``x`` incentivizes the ``x`` cheapest types. For fixed common
network cost ``c`` the server cost of threshold ``x`` is the line
``intercept_x + slope_x * c`` with ``slope_x = xi * (I_1 + ... + I_x)``, so all
comparisons between thresholds reduce to comparing lines in ``c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .model import (
    INF,
    Contract,
    DemandDistribution,
    PriceSchedule,
    Scenario,
    ScenarioError,
    server_cost,
)

# relative tolerance for treating two thresholds' costs as tied
TIE_RTOL = 1e-9


def optimal_rewards(
    scenario: Scenario, data: ArrayLike, incentivized: Iterable[int], c: float
) -> NDArray:
    """Minimal rewards making ``data`` individually rational and incentive compatible.

    The highest-cost incentivized type is paid its data cost plus ``c``; every
    lower type additionally receives the information rent accumulated from the
    types above it. Types outside ``incentivized`` get zero.
    """
    d = np.asarray(data, dtype=float)
    theta = scenario.thetas
    members = sorted(set(int(j) for j in incentivized))
    rewards = np.zeros(scenario.num_types)
    if not members:
        return rewards
    for j in members:
        if not 0 <= j < scenario.num_types:
            raise ScenarioError("incentivized", f"type index {j} out of range")
    rent = 0.0
    above = None
    for j in reversed(members):
        if above is not None:
            rent += (theta[above] - theta[j]) * d[above]
        rewards[j] = theta[j] * d[j] + rent + c
        above = j
    return rewards


@dataclass(frozen=True)
class ThresholdCost:
    """Server cost of incentivizing the ``x`` cheapest types at network cost ``c``."""

    x: int
    cost: float
    data_size: float
    feasible: bool


def _interior_data_size(scenario: Scenario, x: int) -> float:
    counts, theta = scenario.counts, scenario.thetas
    below = float(counts[: x - 1].sum())
    total = below + counts[x - 1]
    prev_theta = theta[x - 2] if x >= 2 else 0.0
    k = total * theta[x - 1] - below * prev_theta
    ix = counts[x - 1]
    return 1.0 / (ix ** (1 / 3) * (2.0 * scenario.xi * k) ** (2 / 3)) - below * scenario.d_max / ix


def _threshold_data(scenario: Scenario, x: int, d_x: float) -> NDArray:
    d = np.zeros(scenario.num_types)
    d[: x - 1] = scenario.d_max
    d[x - 1] = d_x
    return d


def server_cost_at_threshold(scenario: Scenario, x: int, c: float) -> ThresholdCost:
    """Best server cost when exactly the ``x`` cheapest types are incentivized.

    Types below ``x`` contribute ``d_max``; the threshold type's data size is the
    stationary point of the (convex) cost, clamped to ``d_max``. A nonpositive
    stationary point means the threshold is infeasible and the cost is ``inf``.
    """
    if not 1 <= x <= scenario.num_types:
        raise ScenarioError("threshold", f"{x} outside 1..{scenario.num_types}")
    candidate = _interior_data_size(scenario, x)
    if not candidate > 0:
        return ThresholdCost(x, INF, 0.0, False)
    best = None
    for d_x in {min(candidate, scenario.d_max), scenario.d_max}:
        d = _threshold_data(scenario, x, d_x)
        r = optimal_rewards(scenario, d, range(x), c)
        cost = server_cost(scenario, Contract(d, r))
        if best is None or cost < best[0]:
            best = (cost, d_x)
    return ThresholdCost(x, best[0], best[1], True)


@dataclass(frozen=True)
class CostLine:
    """``cost(c) = intercept + slope * c``; ``intercept`` is ``inf`` when infeasible."""

    x: int
    intercept: float
    slope: float
    data_size: float

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.intercept)

    def at(self, c: float) -> float:
        return self.intercept + self.slope * c


def cost_lines(scenario: Scenario) -> list[CostLine]:
    lines = []
    for x in range(1, scenario.num_types + 1):
        tc = server_cost_at_threshold(scenario, x, 0.0)
        slope = scenario.xi * scenario.users_up_to(x)
        lines.append(CostLine(x, tc.cost, slope, tc.data_size))
    return lines


def server_threshold_interval(
    scenario: Scenario, x: int, lines: list[CostLine] | None = None
) -> tuple[float, float]:
    """Closed range of ``c >= 0`` on which threshold ``x`` minimizes server cost.

    Returns ``(lo, hi)`` with ``hi = inf`` when unbounded; ``lo > hi`` means ``x``
    is never optimal.
    """
    lines = lines if lines is not None else cost_lines(scenario)
    own = lines[x - 1]
    if not own.feasible:
        return INF, -INF
    lo, hi = 0.0, INF
    for other in lines:
        if other.x == x or not other.feasible:
            continue
        gap = other.intercept - own.intercept
        if other.x < x:
            # steeper own line: x wins while c is small enough
            hi = min(hi, gap / (own.slope - other.slope))
        else:
            lo = max(lo, -gap / (other.slope - own.slope))
    return lo, hi


def contract_for_threshold(scenario: Scenario, x: int, c: float) -> Contract:
    if x == 0:
        return Contract.empty(scenario.num_types)
    tc = server_cost_at_threshold(scenario, x, c)
    if not tc.feasible:
        raise ScenarioError("threshold", f"{x} is infeasible")
    d = _threshold_data(scenario, x, tc.data_size)
    return Contract(d, optimal_rewards(scenario, d, range(x), c))


def contract_for_cost(
    scenario: Scenario, c: float, prefer: int | None = None
) -> tuple[Contract, int]:
    """Server's best contract when users face common network cost ``c``.

    Thresholds whose cost ties the minimum (relative ``TIE_RTOL``) are
    resolved toward ``prefer`` when it is among them, else toward the smallest.
    """
    costs = [server_cost_at_threshold(scenario, x, c).cost for x in range(1, scenario.num_types + 1)]
    best = min(costs)
    if not math.isfinite(best):
        return Contract.empty(scenario.num_types), 0
    tied = [x for x, v in enumerate(costs, start=1) if v <= best + TIE_RTOL * max(1.0, abs(best))]
    x = prefer if prefer in tied else tied[0]
    return contract_for_threshold(scenario, x, c), x


def optimal_contract(
    scenario: Scenario,
    prices: PriceSchedule,
    demand: DemandDistribution,
    prefer: int | None = None,
) -> tuple[Contract, int, float]:
    """Server's best response to ``prices`` given the induced ``demand``.

    Returns ``(contract, x, c)`` where ``c`` is the common network cost.
    """
    from .users import common_network_cost

    c = common_network_cost(scenario, prices, demand)
    contract, x = contract_for_cost(scenario, c, prefer)
    return contract, x, c
