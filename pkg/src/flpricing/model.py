"""Domain types and payoff functionals of the federated-learning market.

Units follow the replication setting: currency in cents, data in MB and
network usage in normalized user counts. Slots and type indices are 0-based;
the threshold type ``x`` counts incentivized types, so ``x = 0`` means nobody
is incentivized and ``x = k`` incentivizes types ``0..k-1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

INF = math.inf


class ScenarioError(ValueError):
    """Invalid input; ``field`` names the offending configuration key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field} {message}")
        self.field = field


class NumericalInfeasibility(RuntimeError):
    """A solver could not produce a point satisfying its optimality conditions."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def _frozen(values: ArrayLike, dtype=float) -> NDArray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """A full market instance.

    Parameters
    ----------
    background : array_like
        Background usage ``h(t)`` for each slot.
    price_cap : float
        Regulatory maximum price ``p0`` for any slot.
    beta : float
        Users' congestion sensitivity.
    gamma : float
        Operator's weight on its quadratic network cost.
    xi : float
        Server's weight on total rewards.
    thetas : array_like
        Marginal data costs, strictly increasing.
    counts : array_like
        Number of users of each type.
    d_max : float
        Largest data size a user can contribute.
    """

    background: NDArray
    price_cap: float
    beta: float
    gamma: float
    xi: float
    thetas: NDArray
    counts: NDArray
    d_max: float
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "background", _frozen(self.background))
        object.__setattr__(self, "thetas", _frozen(self.thetas))
        object.__setattr__(self, "counts", _frozen(self.counts))
        for key in ("price_cap", "beta", "gamma", "xi", "d_max"):
            object.__setattr__(self, key, float(getattr(self, key)))
        self._validate()

    def _validate(self):
        h = self.background
        if h.size == 0:
            raise ScenarioError("background", "must contain at least one slot")
        if not np.all(np.isfinite(h)) or np.any(h < 0):
            raise ScenarioError("background", "must be finite and nonnegative")
        if not (math.isfinite(self.price_cap) and self.price_cap >= 0):
            raise ScenarioError("price_cap", "must be finite and nonnegative")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ScenarioError("beta", "must be finite and nonnegative")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ScenarioError("gamma", "must be positive")
        if not (math.isfinite(self.xi) and self.xi > 0):
            raise ScenarioError("xi", "must be positive")
        if not (math.isfinite(self.d_max) and self.d_max > 0):
            raise ScenarioError("d_max", "must be positive")
        th, cnt = self.thetas, self.counts
        if th.size == 0:
            raise ScenarioError("user_types", "must contain at least one type")
        if th.size != cnt.size:
            raise ScenarioError("user_types.count", "must have one entry per theta")
        if not np.all(np.isfinite(th)) or np.any(th <= 0):
            raise ScenarioError("user_types.theta", "must be positive")
        if np.any(np.diff(th) <= 0):
            raise ScenarioError("user_types.theta", "not strictly increasing")
        if np.any(cnt <= 0) or np.any(cnt != np.round(cnt)):
            raise ScenarioError("user_types.count", "must be positive integers")

    @property
    def num_slots(self) -> int:
        return int(self.background.size)

    @property
    def num_types(self) -> int:
        return int(self.thetas.size)

    @property
    def total_users(self) -> int:
        return int(self.counts.sum())

    def users_up_to(self, x: int) -> float:
        """Number of users in the first ``x`` types."""
        return float(self.counts[:x].sum())

    def replace(self, **changes) -> Scenario:
        values = {
            "background": self.background,
            "price_cap": self.price_cap,
            "beta": self.beta,
            "gamma": self.gamma,
            "xi": self.xi,
            "thetas": self.thetas,
            "counts": self.counts,
            "d_max": self.d_max,
            "name": self.name,
        }
        values.update(changes)
        return Scenario(**values)


@dataclass(frozen=True, eq=False)
class Contract:
    """One (data size, reward) item per user type; ``(0, 0)`` marks a type left out."""

    data: NDArray
    rewards: NDArray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))
        object.__setattr__(self, "rewards", _frozen(self.rewards))
        if self.data.shape != self.rewards.shape:
            raise ScenarioError("contract", "data and rewards must have equal length")
        if np.any(self.data < 0) or np.any(self.rewards < 0):
            raise ScenarioError("contract", "items must be nonnegative")

    @classmethod
    def empty(cls, num_types: int) -> Contract:
        return cls(np.zeros(num_types), np.zeros(num_types))

    def __len__(self) -> int:
        return int(self.data.size)

    def item(self, k: int) -> tuple[float, float]:
        return float(self.data[k]), float(self.rewards[k])


@dataclass(frozen=True, eq=False)
class PriceSchedule:
    prices: NDArray

    def __post_init__(self):
        object.__setattr__(self, "prices", _frozen(self.prices))

    @classmethod
    def uniform(cls, num_slots: int, price: float) -> PriceSchedule:
        return cls(np.full(num_slots, float(price)))

    def within_cap(self, cap: float, tol: float = 0.0) -> bool:
        p = self.prices
        return bool(np.all(p >= -tol) and np.all(p <= cap + tol))


@dataclass(frozen=True, eq=False)
class DemandDistribution:
    """Federated-learning users per slot.

    ``integral`` distinguishes a realized assignment of whole users from the
    continuous relaxation used by the solvers.
    """

    counts: NDArray
    integral: bool = False

    def __post_init__(self):
        object.__setattr__(self, "counts", _frozen(self.counts))
        if np.any(self.counts < 0):
            raise ScenarioError("demand", "counts must be nonnegative")

    @classmethod
    def empty(cls, num_slots: int) -> DemandDistribution:
        return cls(np.zeros(num_slots))

    @property
    def selected(self) -> NDArray:
        return np.flatnonzero(self.counts > 0)

    @property
    def unselected(self) -> NDArray:
        return np.flatnonzero(self.counts <= 0)

    @property
    def total(self) -> float:
        return float(self.counts.sum())


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Equilibrium outcome of one mechanism on one scenario."""

    scenario: Scenario
    contract: Contract
    prices: PriceSchedule
    demand: DemandDistribution
    threshold: int
    common_cost: float
    server_cost: float
    operator_profit: float
    user_payoffs: NDArray
    mechanism: str = "IJD"
    notes: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "user_payoffs", _frozen(self.user_payoffs))

    @property
    def total_user_payoff(self) -> float:
        return float(np.dot(self.user_payoffs, self.scenario.counts))


def _check_slot(scenario: Scenario, t: int) -> int:
    if not 0 <= t < scenario.num_slots:
        raise ScenarioError("slot", f"index {t} outside 0..{scenario.num_slots - 1}")
    return int(t)


def network_cost_of_slot(
    scenario: Scenario, prices: PriceSchedule, demand: DemandDistribution, t: int
) -> float:
    """Price plus congestion a user faces in slot ``t`` under ``demand``."""
    t = _check_slot(scenario, t)
    load = demand.counts[t] + scenario.background[t]
    return float(prices.prices[t] + scenario.beta * load * load)


def user_payoff(
    scenario: Scenario,
    item: tuple[float, float],
    theta: float,
    t: int,
    demand: DemandDistribution,
    prices: PriceSchedule,
) -> float:
    """Payoff of a user with marginal cost ``theta`` taking ``item`` in slot ``t``.

    ``demand`` must already count this user in slot ``t``.
    """
    d, r = item
    return r - theta * d - network_cost_of_slot(scenario, prices, demand, t)


def server_cost(scenario: Scenario, contract: Contract) -> float:
    """Accuracy-loss bound plus weighted rewards, assuming every type takes its item.

    Returns ``inf`` when no data is contributed.
    """
    volume = float(np.dot(scenario.counts, contract.data))
    if volume <= 0:
        return INF
    return 1.0 / math.sqrt(volume) + scenario.xi * float(
        np.dot(scenario.counts, contract.rewards)
    )


def realized_server_cost(
    scenario: Scenario, data: ArrayLike, rewards: ArrayLike, weights: ArrayLike
) -> float:
    """Server cost when ``weights[k]`` users actually take the item ``(data[k], rewards[k])``.

    Unlike :func:`server_cost` this does not assume truthful self-selection.
    """
    w = np.asarray(weights, dtype=float)
    volume = float(np.dot(w, data))
    if volume <= 0:
        return INF
    return 1.0 / math.sqrt(volume) + scenario.xi * float(np.dot(w, rewards))


def operator_profit(
    scenario: Scenario, prices: PriceSchedule, demand: DemandDistribution
) -> float:
    """Revenue from participating users minus the network cost of all slots."""
    n = demand.counts
    if n.shape != scenario.background.shape or prices.prices.shape != n.shape:
        raise ScenarioError("demand", "shape does not match the number of slots")
    load = n + scenario.background
    return float(np.dot(n, prices.prices) - scenario.gamma * np.dot(load, load))
