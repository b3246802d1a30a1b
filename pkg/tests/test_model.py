from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flpricing.model import (
    Contract,
    DemandDistribution,
    PriceSchedule,
    ScenarioError,
    network_cost_of_slot,
    operator_profit,
    server_cost,
    user_payoff,
)

from conftest import eval_operator_profit, eval_server_cost, eval_user_payoff, make_scenario


@pytest.mark.parametrize(
    "r,theta,d,p,beta,n,h,expected",
    [(10, 1, 2, 3, 1, 1, 0, 4.0), (5, 1, 5, 0, 0, 1, 0, 0.0), (9, 1, 4, 3, 1, 1, 1, -2.0)],
)
def test_user_payoff_examples(r, theta, d, p, beta, n, h, expected):
    s = make_scenario(h=(h,), beta=beta)
    value = user_payoff(s, (d, r), theta, 0, DemandDistribution([n]), PriceSchedule([p]))
    assert value == expected
    assert value == eval_user_payoff(r, theta, d, p, beta, n, h)


def test_user_payoff_rejects_bad_slot():
    s = make_scenario()
    with pytest.raises(ScenarioError):
        user_payoff(s, (1, 1), 1, 1, DemandDistribution([1]), PriceSchedule([0]))


def test_server_cost_examples():
    assert server_cost(make_scenario(counts=(1,), xi=1.0), Contract([4], [0])) == 0.5
    s = make_scenario(counts=(2,), xi=0.5)
    assert server_cost(s, Contract([0.5], [3.5])) == pytest.approx(4.5, abs=1e-15)
    assert server_cost(s, Contract([0.5], [3.5])) == pytest.approx(eval_server_cost([2], [0.5], [3.5], 0.5))
    assert server_cost(s, Contract.empty(1)) == math.inf


def test_operator_profit_examples():
    s = make_scenario(h=(0,), gamma=1)
    assert operator_profit(s, PriceSchedule([5]), DemandDistribution([2])) == 6
    s = make_scenario(h=(1, 1), gamma=1)
    assert operator_profit(s, PriceSchedule([7, 3]), DemandDistribution([0, 0])) == -2
    s = make_scenario(h=(0, 1), gamma=0.5)
    assert operator_profit(s, PriceSchedule([3, 3]), DemandDistribution([1, 1])) == 3.5


def test_operator_profit_shape_mismatch():
    with pytest.raises(ScenarioError):
        operator_profit(make_scenario(h=(0, 1)), PriceSchedule([1]), DemandDistribution([1]))


def test_network_cost_of_slot_examples():
    s = make_scenario(h=(0,), beta=1)
    assert network_cost_of_slot(s, PriceSchedule([5]), DemandDistribution([1]), 0) == 6
    s = make_scenario(h=(0,), beta=0)
    assert network_cost_of_slot(s, PriceSchedule([5]), DemandDistribution([7]), 0) == 5
    s = make_scenario(h=(1,), beta=2)
    assert network_cost_of_slot(s, PriceSchedule([2]), DemandDistribution([3]), 0) == 34
    with pytest.raises(ScenarioError):
        network_cost_of_slot(s, PriceSchedule([2]), DemandDistribution([3]), -1)


@pytest.mark.parametrize(
    "changes,field",
    [
        ({"thetas": (3, 3), "counts": (1, 1)}, "user_types.theta"),
        ({"h": (-1,)}, "background"),
        ({"gamma": 0}, "gamma"),
        ({"xi": 0}, "xi"),
        ({"beta": -1}, "beta"),
        ({"p0": -1}, "price_cap"),
        ({"d_max": 0}, "d_max"),
        ({"counts": (1.5,)}, "user_types.count"),
    ],
)
def test_scenario_validation(changes, field):
    with pytest.raises(ScenarioError) as err:
        make_scenario(**changes)
    assert err.value.field == field


def test_theta_error_message():
    with pytest.raises(ScenarioError, match="user_types.theta not strictly increasing"):
        make_scenario(thetas=(3, 3), counts=(1, 1))


def test_scenario_arrays_are_read_only():
    s = make_scenario(h=(1, 2))
    with pytest.raises(ValueError):
        s.background[0] = 5


finite = st.floats(0.1, 10.0)


@settings(max_examples=60, deadline=None)
@given(r=finite, theta=finite, d=finite, p=finite, beta=finite, n=finite, h=finite, bump=st.floats(0.01, 5))
def test_user_payoff_monotone(r, theta, d, p, beta, n, h, bump):
    s = make_scenario(h=(h,), beta=beta)
    base = user_payoff(s, (d, r), theta, 0, DemandDistribution([n]), PriceSchedule([p]))
    assert user_payoff(s, (d, r), theta + bump, 0, DemandDistribution([n]), PriceSchedule([p])) < base
    assert user_payoff(s, (d, r), theta, 0, DemandDistribution([n]), PriceSchedule([p + bump])) < base
    assert user_payoff(s, (d, r), theta, 0, DemandDistribution([n + bump]), PriceSchedule([p])) < base
    assert user_payoff(s, (d, r + bump), theta, 0, DemandDistribution([n]), PriceSchedule([p])) == pytest.approx(base + bump)


@settings(max_examples=60, deadline=None)
@given(d=st.lists(finite, min_size=2, max_size=2), r=st.lists(finite, min_size=2, max_size=2),
       k=st.integers(0, 1), bump=st.floats(0.01, 5))
def test_server_cost_monotone(d, r, k, bump):
    s = make_scenario(thetas=(1, 2), counts=(1, 2), xi=0.3)
    base = server_cost(s, Contract(d, r))
    more_data = np.array(d)
    more_data[k] += bump
    more_reward = np.array(r)
    more_reward[k] += bump
    assert server_cost(s, Contract(more_data, r)) < base
    assert server_cost(s, Contract(d, more_reward)) > base


@settings(max_examples=40, deadline=None)
@given(h=st.lists(st.floats(0, 10), min_size=1, max_size=6), gamma=st.floats(0.01, 3))
def test_idle_profit_is_background_cost(h, gamma):
    s = make_scenario(h=h, gamma=gamma)
    profit = operator_profit(s, PriceSchedule(np.ones(len(h))), DemandDistribution.empty(len(h)))
    assert profit == pytest.approx(-gamma * sum(x * x for x in h))
    assert profit == pytest.approx(eval_operator_profit([0] * len(h), h, [1] * len(h), gamma))


def test_functions_are_pure():
    s = make_scenario(h=(0.3, 1.7), gamma=0.7)
    p, n = PriceSchedule([1.1, 2.2]), DemandDistribution([0.4, 3.3])
    assert operator_profit(s, p, n) == operator_profit(s, p, n)
    k = Contract([0.2], [0.9])
    assert server_cost(s, k) == server_cost(s, k)
