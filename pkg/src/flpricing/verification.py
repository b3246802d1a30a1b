"""Random small instances and the property checks behind ``flpricing verify``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import Scenario


def random_scenario(
    rng: np.random.Generator,
    max_types: int = 3,
    max_slots: int = 3,
    max_count: int = 3,
    beta: float | None = None,
) -> Scenario:
    """Small instance with every parameter drawn independently.

    ``beta=None`` draws it from ``[0.05, 1]``; pass ``0.0`` for congestion-free users.
    """
    J = int(rng.integers(1, max_types + 1))
    T = int(rng.integers(1, max_slots + 1))
    thetas = np.cumsum(rng.uniform(0.2, 2.0, J))
    return Scenario(
        background=rng.uniform(0.0, 3.0, T),
        price_cap=float(rng.uniform(1.0, 20.0)),
        beta=float(rng.uniform(0.05, 1.0)) if beta is None else beta,
        gamma=float(rng.uniform(0.05, 1.0)),
        xi=float(rng.uniform(0.01, 1.0)),
        thetas=thetas,
        counts=rng.integers(1, max_count + 1, J),
        d_max=float(rng.uniform(0.5, 5.0)),
        name="random",
    )


@dataclass(frozen=True)
class CheckResult:
    name: str
    trials: int
    failures: int
    worst: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _ic_ir(s: Scenario, rng) -> float:
    from .pricing import optimal_operator_solution

    r = optimal_operator_solution(s)
    if r.threshold == 0:
        return 0.0
    k = r.contract
    surplus = k.rewards[None, :] - s.thetas[:, None] * k.data[None, :]
    own = np.diag(surplus)[: r.threshold]
    ic = float((surplus[: r.threshold].max(axis=1) - own).max())
    ir = abs(own[r.threshold - 1] - r.common_cost)
    return max(ic, ir / max(1.0, r.common_cost))


def _kkt(s: Scenario, rng) -> float:
    from .pricing import optimal_demand_distribution

    m = float(rng.uniform(0.5, 10.0))
    sol = optimal_demand_distribution(s, m)
    return max(float(np.abs(sol.stationarity(s)).max()) / 1e-6, abs(sol.n.sum() - m) / 1e-9)


def _equal_cost(s: Scenario, rng) -> float:
    from .pricing import optimal_operator_solution

    r = optimal_operator_solution(s)
    if r.threshold == 0:
        return 0.0
    y = r.demand.counts + s.background
    cost = r.prices.prices + s.beta * y * y
    used = r.demand.counts > 0
    spread = float(cost[used].max() - cost[used].min())
    return spread / (1e-9 * max(1.0, r.common_cost))


def _brd(s: Scenario, rng) -> float:
    from .pricing import optimal_operator_solution
    from .users import best_response_dynamics, deviation_gains

    r = optimal_operator_solution(s)
    a, converged = best_response_dynamics(s, r.contract, r.prices, seed=int(rng.integers(1 << 31)))
    if not converged:
        return math.inf
    return float(deviation_gains(s, r.contract, r.prices, a).max()) / 1e-9


def _ndp(s: Scenario, rng) -> float:
    from .benchmarks import solve_ndp
    from .pricing import optimal_operator_solution

    ijd = optimal_operator_solution(s).operator_profit
    ndp = solve_ndp(s, grid_points=200).operator_profit
    return (ndp - ijd) / (1e-9 * max(1.0, abs(ijd)))


CHECKS: dict[str, Callable[[Scenario, np.random.Generator], float]] = {
    "contract IC and threshold IR": _ic_ir,
    "demand optimality conditions": _kkt,
    "equal cost on used slots": _equal_cost,
    "no profitable user deviation": _brd,
    "dynamic beats uniform pricing": _ndp,
}


def run_checks(trials: int, seed: int) -> list[CheckResult]:
    """Run every check on ``trials`` random instances; a value above 1 is a failure."""
    rng = np.random.default_rng(seed)
    out = []
    for name, check in CHECKS.items():
        worst = -math.inf
        failures = 0
        for _ in range(trials):
            value = check(random_scenario(rng), rng)
            worst = max(worst, value)
            failures += value > 1.0
        out.append(CheckResult(name, trials, failures, worst))
    return out


def scenario_checks(scenario: Scenario, seed: int = 0) -> list[tuple[str, bool, str]]:
    """Equilibrium checks on one scenario's vertical solution."""
    from .pricing import optimal_operator_solution
    from .users import assignment_from_demand, deviation_gains, round_demand

    r = optimal_operator_solution(scenario)
    out = []
    if r.threshold == 0:
        return [("participation", False, "no type is incentivized")]
    used = r.demand.counts > 0
    y = r.demand.counts + scenario.background
    cost = r.prices.prices + scenario.beta * y * y
    spread = float(cost[used].max() - cost[used].min())
    out.append(("equal cost on used slots", spread <= 1e-9 * max(1.0, r.common_cost), f"spread {spread:.3g}"))
    idle = float(cost[~used].min()) if (~used).any() else float("inf")
    out.append(("unused slots no cheaper", idle >= r.common_cost - 1e-9 * max(1.0, r.common_cost),
                f"cheapest unused {idle:.6g}"))
    p = r.prices.prices
    out.append(("prices within cap", bool((p >= 0).all() and (p <= scenario.price_cap).all()), ""))
    counts = round_demand(r.demand.counts)
    assignment = assignment_from_demand(scenario, r.contract, counts, range(r.threshold))
    gain = float(deviation_gains(scenario, r.contract, r.prices, assignment).max())
    slack = scenario.beta * (2 * float((counts + scenario.background).max()) + 1)
    out.append(("integer deviation within slack", gain <= slack, f"gain {gain:.3g}, slack {slack:.3g}"))
    k = r.contract
    surplus = k.rewards[None, :] - scenario.thetas[:, None] * k.data[None, :]
    own = np.diag(surplus)[: r.threshold]
    ic = float((surplus[: r.threshold].max(axis=1) - own).max())
    out.append(("contract IC", ic <= 1e-12 * max(1.0, float(k.rewards.max())), f"worst gain {ic:.3g}"))
    return out
