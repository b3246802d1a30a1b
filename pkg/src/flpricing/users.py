"""Users' game: contract-item choice, slot choice and participation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import kernels
from .model import (
    INF,
    Contract,
    DemandDistribution,
    PriceSchedule,
    Scenario,
    ScenarioError,
)

DEVIATION_TOL = 1e-9
# relative slack for ties between contract items and for the zero-payoff boundary
CHOICE_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class UserAssignment:
    """Per-user choices; ``item`` and ``slot`` are ``-1`` for users who opt out."""

    user_type: NDArray
    item: NDArray
    slot: NDArray

    @property
    def participates(self) -> NDArray:
        return self.slot >= 0

    @property
    def num_participants(self) -> int:
        return int(self.participates.sum())

    def demand(self, num_slots: int) -> DemandDistribution:
        chosen = self.slot[self.slot >= 0]
        return DemandDistribution(np.bincount(chosen, minlength=num_slots).astype(float), integral=True)


def _offered(contract: Contract) -> NDArray:
    return (contract.data > 0) | (contract.rewards > 0)


def item_values(scenario: Scenario, contract: Contract) -> tuple[NDArray, NDArray]:
    """Best item and its surplus ``r_k - theta_j d_k`` for every type.

    Zero items are not offers. Near-ties go to the type's own item, else to the
    lowest index. Types with nothing on offer get item ``-1`` and value ``-inf``.
    """
    theta = scenario.thetas
    offered = _offered(contract)
    J = scenario.num_types
    items = np.full(J, -1, dtype=np.int64)
    values = np.full(J, -INF)
    if not offered.any():
        return items, values
    surplus = contract.rewards[None, :] - theta[:, None] * contract.data[None, :]
    surplus[:, ~offered] = -INF
    for j in range(J):
        best = surplus[j].max()
        scale = max(1.0, abs(contract.rewards).max(), abs(theta[j] * contract.data).max())
        tied = np.flatnonzero(surplus[j] >= best - CHOICE_RTOL * scale)
        k = j if j in tied else int(tied[0])
        items[j] = k
        values[j] = surplus[j, k]
    return items, values


def type_budgets(scenario: Scenario, contract: Contract) -> NDArray:
    """Largest network cost each type would pay to take part."""
    return item_values(scenario, contract)[1]


def contract_item_choice(
    scenario: Scenario, contract: Contract, c: float
) -> list[tuple[int | None, float]]:
    """Each type's chosen item and payoff given common network cost ``c``.

    A type opts out (``None``, payoff 0) when its best payoff is negative.
    """
    items, values = item_values(scenario, contract)
    out = []
    for k, v in zip(items, values):
        payoff = v - c
        scale = max(1.0, abs(v), abs(c))
        if k < 0 or payoff < -CHOICE_RTOL * scale:
            out.append((None, 0.0))
        else:
            out.append((int(k), float(payoff)))
    return out


def common_network_cost(
    scenario: Scenario, prices: PriceSchedule, demand: DemandDistribution
) -> float:
    """Lowest price-plus-congestion over all slots."""
    load = demand.counts + scenario.background
    return float(np.min(prices.prices + scenario.beta * load * load))


def wardrop_demand(
    scenario: Scenario, prices: ArrayLike, mass: float
) -> tuple[float, NDArray]:
    """Continuous user split of ``mass`` equalizing slot costs; returns ``(c, n)``.

    With ``beta = 0`` users only use the cheapest slots and are spread over
    them by water-filling on background usage.
    """
    p = np.asarray(prices, dtype=float)
    h = scenario.background
    if scenario.beta > 0:
        return kernels.wardrop_level(p, h, scenario.beta, float(mass))
    cheapest = float(p.min())
    n = np.zeros_like(h)
    if mass > 0:
        idx = np.flatnonzero(p == cheapest)
        v = kernels.water_level(h[idx], float(mass))
        n[idx] = np.maximum(v - h[idx], 0.0)
    return cheapest, n


def round_demand(counts: ArrayLike) -> NDArray:
    """Largest-remainder rounding of a continuous demand, preserving the total."""
    n = np.asarray(counts, dtype=float)
    total = int(round(n.sum()))
    base = np.floor(n).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(n - base), kind="stable")
        base[order[:short]] += 1
    return base


def assignment_from_demand(
    scenario: Scenario, contract: Contract, counts: ArrayLike, participating_types: ArrayLike
) -> UserAssignment:
    """Place the users of ``participating_types`` (cheapest first) into slots by ``counts``."""
    items, _ = item_values(scenario, contract)
    user_type = np.repeat(np.arange(scenario.num_types), scenario.counts.astype(np.int64))
    item = np.full(user_type.size, -1, dtype=np.int64)
    slot = np.full(user_type.size, -1, dtype=np.int64)
    members = np.flatnonzero(np.isin(user_type, np.asarray(participating_types, dtype=np.int64)))
    seats = np.repeat(np.arange(scenario.num_slots), np.asarray(counts, dtype=np.int64))
    if seats.size != members.size:
        raise ScenarioError("demand", f"{seats.size} seats for {members.size} participants")
    slot[members] = seats
    item[members] = items[user_type[members]]
    return UserAssignment(user_type, item, slot)


def deviation_gains(
    scenario: Scenario, contract: Contract, prices: PriceSchedule, assignment: UserAssignment
) -> NDArray:
    """Per-user gain of the best unilateral deviation over every item, slot and opting out."""
    p = prices.prices
    h = scenario.background
    beta = scenario.beta
    loads = assignment.demand(scenario.num_slots).counts
    surplus = contract.rewards[None, :] - scenario.thetas[:, None] * contract.data[None, :]
    gains = np.empty(assignment.user_type.size)
    for i, (j, k, s) in enumerate(zip(assignment.user_type, assignment.item, assignment.slot)):
        if s >= 0:
            own = p[s] + beta * (loads[s] + h[s]) ** 2
            current = surplus[j, k] - own
            others = loads.copy()
            others[s] -= 1
        else:
            current = 0.0
            others = loads
        slot_cost = p + beta * (others + 1 + h) ** 2
        best = surplus[j].max() - slot_cost.min()
        gains[i] = max(best, 0.0) - current
    return gains


def best_response_dynamics(
    scenario: Scenario,
    contract: Contract,
    prices: PriceSchedule,
    seed: int = 0,
    max_rounds: int = 200,
    tol: float = DEVIATION_TOL,
) -> tuple[UserAssignment, bool]:
    """Asynchronous single-user best responses until nobody gains more than ``tol``.

    Each round visits users in a fresh seeded random order. Item choice does
    not interact with slot choice, so each user's item is fixed to its best
    one and the dynamics move only slots and participation.
    """
    if max_rounds < 1:
        raise ScenarioError("max_rounds", "must be at least 1")
    rng = np.random.default_rng(seed)
    items, values = item_values(scenario, contract)
    user_type = np.repeat(np.arange(scenario.num_types), scenario.counts.astype(np.int64))
    user_values = values[user_type]
    slot = np.full(user_type.size, -1, dtype=np.int64)
    loads = np.zeros(scenario.num_slots)
    p = np.ascontiguousarray(prices.prices, dtype=float)
    h = np.ascontiguousarray(scenario.background, dtype=float)
    converged = False
    for _ in range(max_rounds):
        order = rng.permutation(user_type.size).astype(np.int64)
        changes = kernels.brd_sweep(order, user_values, slot, loads, p, h, scenario.beta, tol)
        if changes == 0:
            converged = True
            break
    item = np.where(slot >= 0, items[user_type], -1)
    return UserAssignment(user_type, item, slot), converged


def verify_equal_cost_equilibrium(
    scenario: Scenario,
    prices: PriceSchedule,
    demand: DemandDistribution | UserAssignment,
    tol: float | None = None,
) -> bool:
    """Check that used slots share one cost and unused slots are no cheaper.

    The default tolerance is 1e-6 for continuous demand and the integer
    granularity slack ``beta * (2 * max_t(n_t + h_t) + 1)`` for whole users.
    """
    if isinstance(demand, UserAssignment):
        demand = demand.demand(scenario.num_slots)
    n = demand.counts
    if n.sum() <= 0:
        raise ScenarioError("demand", "has no participants")
    load = n + scenario.background
    if tol is None:
        tol = scenario.beta * (2.0 * load.max() + 1.0) if demand.integral else 1e-6
    cost = prices.prices + scenario.beta * load * load
    used = n > 0
    chosen = cost[used]
    if chosen.max() - chosen.min() > tol:
        return False
    idle = prices.prices[~used] + scenario.beta * scenario.background[~used] ** 2
    return bool(np.all(idle >= chosen.min() - tol))
