from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from flpricing import _pykernels, kernels

BACKENDS = kernels.available()


def test_compiled_backend_is_built():
    assert "cython" in BACKENDS


def _bisect_water_level(h, mass):
    lo, hi = min(h), max(h) + mass
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sum(max(mid - x, 0.0) for x in h) < mass:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("name", BACKENDS)
@pytest.mark.parametrize("h,mass,v", [((1, 3, 10), 4, 4.0), ((5, 5), 2, 6.0), ((0, 2, 2, 7), 5, 3.0)])
def test_water_level_examples(name, h, mass, v):
    assert kernels.backend(name).water_level(np.array(h, float), mass) == pytest.approx(v, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(h=st.lists(st.floats(0, 50), min_size=1, max_size=10), mass=st.floats(0.01, 100))
def test_water_level_matches_bisection(h, mass):
    v = kernels.water_level(np.array(h), mass)
    assert v == pytest.approx(_bisect_water_level(h, mass), rel=1e-9, abs=1e-9)
    assert sum(max(v - x, 0) for x in h) == pytest.approx(mass, rel=1e-9, abs=1e-9)


def _box_objective(n, h, beta, gamma):
    return float(np.sum(beta * n * (n + h) ** 2 + gamma * (n + h) ** 2))


@settings(max_examples=40, deadline=None)
@given(
    h=st.lists(st.floats(0, 5), min_size=1, max_size=6),
    beta=st.floats(0.05, 2), gamma=st.floats(0.05, 2), mass=st.floats(0.1, 10),
    level=st.floats(0, 1), cap_frac=st.floats(0.3, 1),
)
def test_box_allocate_against_scipy(h, beta, gamma, mass, level, cap_frac):
    h = np.array(h)
    v = kernels.water_level(h, mass)
    L = h.min() + level * (v - h.min())
    lo = np.maximum(L - h, 0)
    hi = np.full_like(h, np.inf)
    n, lam = kernels.box_allocate(h, beta, gamma, lo, hi, mass)
    assert n is not None
    assert n.sum() == pytest.approx(mass, rel=1e-12)
    assert np.all(n >= lo - 1e-12)
    res = minimize(
        _box_objective, x0=np.full(h.size, mass / h.size) + lo * 0, args=(h, beta, gamma),
        bounds=[(a, None) for a in lo], constraints=[{"type": "eq", "fun": lambda x: x.sum() - mass}],
        method="SLSQP", options={"ftol": 1e-14, "maxiter": 500},
    )
    assert _box_objective(n, h, beta, gamma) <= res.fun + 1e-7 * max(1, abs(res.fun))


def test_box_allocate_infeasible():
    n, lam = kernels.box_allocate(np.zeros(2), 1.0, 1.0, np.zeros(2), np.ones(2), 3.0)
    assert n is None


@settings(max_examples=60, deadline=None)
@given(
    h=st.lists(st.floats(0, 5), min_size=1, max_size=6),
    p=st.lists(st.floats(0, 20), min_size=6, max_size=6),
    beta=st.floats(0.05, 2), gamma=st.floats(0.05, 2), mass=st.floats(0.1, 10),
    lo_frac=st.floats(0, 0.5), hi_extra=st.floats(0.5, 5),
)
def test_backends_agree(h, p, beta, gamma, mass, lo_frac, hi_extra):
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    cy, py = kernels.backend("cython"), kernels.backend("python")
    h = np.array(h)
    p = np.array(p[: h.size])
    lo = np.full_like(h, lo_frac * mass / h.size)
    hi = lo + hi_extra
    a, la = cy.box_allocate(h, beta, gamma, lo, hi, mass)
    b, lb = py.box_allocate(h, beta, gamma, lo, hi, mass)
    if a is None or b is None:
        assert a is None and b is None
    else:
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)
    ca, na = cy.wardrop_level(p, h, beta, mass)
    cb, nb = py.wardrop_level(p, h, beta, mass)
    assert ca == pytest.approx(cb, rel=1e-12)
    np.testing.assert_allclose(na, nb, rtol=1e-9, atol=1e-9)
    assert cy.water_level(h, mass) == pytest.approx(py.water_level(h, mass), rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_brd_sweep_backends_agree(seed):
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(seed)
    N, T = 15, 4
    values = rng.uniform(0, 10, N)
    prices = rng.uniform(0, 3, T)
    h = rng.uniform(0, 2, T)
    order = rng.permutation(N).astype(np.int64)
    states = []
    for mod in (kernels.backend("cython"), _pykernels):
        slot = np.full(N, -1, dtype=np.int64)
        loads = np.zeros(T)
        changes = [mod.brd_sweep(order, values, slot, loads, prices, h, 0.3, 1e-9) for _ in range(3)]
        states.append((changes, slot.copy(), loads.copy()))
    assert states[0][0] == states[1][0]
    np.testing.assert_array_equal(states[0][1], states[1][1])
    np.testing.assert_array_equal(states[0][2], states[1][2])


def test_pure_python_selected_by_env(monkeypatch):
    import importlib

    monkeypatch.setenv("FLPRICING_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
        assert mod.box_allocate is _pykernels.box_allocate
    finally:
        monkeypatch.delenv("FLPRICING_PURE_PYTHON")
        importlib.reload(kernels)
