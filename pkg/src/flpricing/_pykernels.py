"""Pure-Python implementations of the hot loops.

Same signatures and semantics as the compiled ``_kernels`` module; selected by
:mod:`flpricing.kernels` when the extension is unavailable.
"""
from __future__ import annotations

import math

import numpy as np

_MAX_BISECT = 400


def _allocation(lam, h, beta, gamma, lo, hi):
    kappa = h * (beta * h + 2.0 * gamma)
    b = 2.0 * beta * h + gamma
    disc = np.maximum((beta * h - gamma) ** 2 - 3.0 * beta * lam, 0.0)
    root = np.maximum(-(kappa + lam) / (np.sqrt(disc) + b), 0.0)
    return np.minimum(np.maximum(root, lo), hi)


def _spread_residual(n, lo, hi, residual):
    free = (n > lo) & (n < hi)
    if residual != 0.0 and free.any():
        n[free] += residual / free.sum()
        np.clip(n, lo, hi, out=n)
    return n


def box_allocate(h, beta, gamma, lo, hi, mass):
    """Cheapest way to place ``mass`` users given per-slot bounds ``lo <= n <= hi``.

    Minimizes ``sum(beta*n*(n+h)**2 + gamma*(n+h)**2)`` by bisection on the
    multiplier of the mass constraint. Returns ``(n, lam)``; ``n`` is ``None``
    when the bounds cannot hold ``mass``.
    """
    h = np.asarray(h, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.sum() > mass * (1 + 1e-15) + 1e-300 or hi.sum() < mass * (1 - 1e-15):
        return None, math.nan
    kappa = h * (beta * h + 2.0 * gamma)
    lam_hi = -float(kappa.min())
    if _allocation(lam_hi, h, beta, gamma, lo, hi).sum() >= mass:
        return lo.copy(), lam_hi
    step = max(1.0, abs(lam_hi))
    lam_lo = lam_hi - step
    while _allocation(lam_lo, h, beta, gamma, lo, hi).sum() < mass:
        step *= 2.0
        lam_lo = lam_hi - step
        if step > 1e300:
            return hi.copy(), -math.inf
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lam_lo + lam_hi)
        if mid <= lam_lo or mid >= lam_hi:
            break
        total = _allocation(mid, h, beta, gamma, lo, hi).sum()
        if total > mass:
            lam_lo = mid
        elif total < mass:
            lam_hi = mid
        else:
            lam_lo = lam_hi = mid
            break
    lam = 0.5 * (lam_lo + lam_hi)
    n = _allocation(lam, h, beta, gamma, lo, hi)
    return _spread_residual(n, lo, hi, mass - n.sum()), lam


def wardrop_level(prices, h, beta, mass):
    """Common cost ``c`` at which non-atomic users of total ``mass`` equalize slot costs.

    Each used slot carries load ``sqrt((c - p)/beta) - h``; requires ``beta > 0``.
    Returns ``(c, n)``.
    """
    p = np.asarray(prices, dtype=float)
    h = np.asarray(h, dtype=float)
    base = p + beta * h * h
    c_lo = float(base.min())
    if mass <= 0:
        return c_lo, np.zeros_like(h)

    def load(c):
        return np.maximum(np.sqrt(np.maximum(c - p, 0.0) / beta) - h, 0.0)

    step = max(1.0, abs(c_lo))
    c_hi = c_lo + step
    while load(c_hi).sum() < mass:
        step *= 2.0
        c_hi = c_lo + step
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (c_lo + c_hi)
        if mid <= c_lo or mid >= c_hi:
            break
        total = load(mid).sum()
        if total < mass:
            c_lo = mid
        elif total > mass:
            c_hi = mid
        else:
            c_lo = c_hi = mid
            break
    c = 0.5 * (c_lo + c_hi)
    n = load(c)
    n = _spread_residual(n, np.zeros_like(n), np.full_like(n, np.inf), mass - n.sum())
    return c, n


def water_level(h, mass):
    """Level ``v`` with ``sum(max(v - h, 0)) == mass``, exact by sorting."""
    hs = np.sort(np.asarray(h, dtype=float))
    if mass <= 0:
        return float(hs[0])
    filled = 0.0
    for k in range(hs.size):
        filled += hs[k]
        v = (mass + filled) / (k + 1)
        if k + 1 == hs.size or v <= hs[k + 1]:
            return float(v)
    raise AssertionError("unreachable")


def brd_sweep(order, values, slot, loads, prices, h, beta, tol):
    """One asynchronous best-response pass over ``order``; mutates ``slot``/``loads``.

    ``values[i]`` is user ``i``'s best item surplus; ``slot[i] == -1`` means
    opted out. Returns the number of users that moved.
    """
    T = len(h)
    changes = 0
    for i in order:
        s = slot[i]
        if s >= 0:
            loads[s] -= 1.0
        best_t = -1
        best_cost = math.inf
        for t in range(T):
            y = loads[t] + 1.0 + h[t]
            cost = prices[t] + beta * y * y
            if cost < best_cost:
                best_cost = cost
                best_t = t
        if s >= 0:
            y = loads[s] + 1.0 + h[s]
            current = values[i] - (prices[s] + beta * y * y)
        else:
            current = 0.0
        candidate = values[i] - best_cost
        if candidate >= 0.0:
            target, gain = best_t, candidate
        else:
            target, gain = -1, 0.0
        if target != s and gain > current + tol:
            s = target
            changes += 1
        slot[i] = s
        if s >= 0:
            loads[s] += 1.0
    return changes
