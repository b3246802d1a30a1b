# cython: language_level=3
"""Compiled versions of the hot loops in :mod:`flpricing._pykernels`."""
from libc.math cimport sqrt, fabs, INFINITY, NAN

import numpy as np

cdef int MAX_BISECT = 400


cdef inline double _clipped(double lam, double h, double beta, double gamma,
                            double lo, double hi) nogil:
    cdef double kappa = h * (beta * h + 2.0 * gamma)
    cdef double b = 2.0 * beta * h + gamma
    cdef double disc = (beta * h - gamma) * (beta * h - gamma) - 3.0 * beta * lam
    cdef double root
    if disc < 0.0:
        disc = 0.0
    root = -(kappa + lam) / (sqrt(disc) + b)
    if root < 0.0:
        root = 0.0
    if root < lo:
        root = lo
    if root > hi:
        root = hi
    return root


cdef double _mass(double lam, const double[::1] h, double beta, double gamma,
                  const double[::1] lo, const double[::1] hi) nogil:
    cdef Py_ssize_t t
    cdef double total = 0.0
    for t in range(h.shape[0]):
        total += _clipped(lam, h[t], beta, gamma, lo[t], hi[t])
    return total


def box_allocate(h, double beta, double gamma, lo, hi, double mass):
    cdef const double[::1] hv = np.ascontiguousarray(h, dtype=float)
    cdef const double[::1] lov = np.ascontiguousarray(lo, dtype=float)
    cdef const double[::1] hiv = np.ascontiguousarray(hi, dtype=float)
    cdef Py_ssize_t T = hv.shape[0], t, k, nfree
    cdef double sum_lo = 0.0, sum_hi = 0.0, kmin = INFINITY, kappa
    cdef double lam_hi, lam_lo, step, mid, total, lam, resid
    for t in range(T):
        sum_lo += lov[t]
        sum_hi += hiv[t]
        kappa = hv[t] * (beta * hv[t] + 2.0 * gamma)
        if kappa < kmin:
            kmin = kappa
    if sum_lo > mass * (1 + 1e-15) + 1e-300 or sum_hi < mass * (1 - 1e-15):
        return None, NAN
    lam_hi = -kmin
    if _mass(lam_hi, hv, beta, gamma, lov, hiv) >= mass:
        return np.array(lov, dtype=float), lam_hi
    step = fabs(lam_hi)
    if step < 1.0:
        step = 1.0
    lam_lo = lam_hi - step
    while _mass(lam_lo, hv, beta, gamma, lov, hiv) < mass:
        step *= 2.0
        lam_lo = lam_hi - step
        if step > 1e300:
            return np.array(hiv, dtype=float), -INFINITY
    for k in range(MAX_BISECT):
        mid = 0.5 * (lam_lo + lam_hi)
        if mid <= lam_lo or mid >= lam_hi:
            break
        total = _mass(mid, hv, beta, gamma, lov, hiv)
        if total > mass:
            lam_lo = mid
        elif total < mass:
            lam_hi = mid
        else:
            lam_lo = mid
            lam_hi = mid
            break
    lam = 0.5 * (lam_lo + lam_hi)
    out = np.empty(T, dtype=float)
    cdef double[::1] n = out
    total = 0.0
    nfree = 0
    for t in range(T):
        n[t] = _clipped(lam, hv[t], beta, gamma, lov[t], hiv[t])
        total += n[t]
        if lov[t] < n[t] < hiv[t]:
            nfree += 1
    resid = mass - total
    if resid != 0.0 and nfree > 0:
        for t in range(T):
            if lov[t] < n[t] < hiv[t]:
                n[t] += resid / nfree
                if n[t] < lov[t]:
                    n[t] = lov[t]
                if n[t] > hiv[t]:
                    n[t] = hiv[t]
    return out, lam


cdef double _wardrop_mass(double c, const double[::1] p, const double[::1] h, double beta) nogil:
    cdef Py_ssize_t t
    cdef double total = 0.0, y, gap
    for t in range(p.shape[0]):
        gap = c - p[t]
        if gap > 0.0:
            y = sqrt(gap / beta) - h[t]
            if y > 0.0:
                total += y
    return total


def wardrop_level(prices, h, double beta, double mass):
    cdef const double[::1] pv = np.ascontiguousarray(prices, dtype=float)
    cdef const double[::1] hv = np.ascontiguousarray(h, dtype=float)
    cdef Py_ssize_t T = pv.shape[0], t, k, nfree
    cdef double c_lo = INFINITY, base, step, c_hi, mid, total, c, resid, gap
    for t in range(T):
        base = pv[t] + beta * hv[t] * hv[t]
        if base < c_lo:
            c_lo = base
    out = np.zeros(T, dtype=float)
    cdef double[::1] n = out
    if mass <= 0:
        return c_lo, out
    step = fabs(c_lo)
    if step < 1.0:
        step = 1.0
    c_hi = c_lo + step
    while _wardrop_mass(c_hi, pv, hv, beta) < mass:
        step *= 2.0
        c_hi = c_lo + step
    for k in range(MAX_BISECT):
        mid = 0.5 * (c_lo + c_hi)
        if mid <= c_lo or mid >= c_hi:
            break
        total = _wardrop_mass(mid, pv, hv, beta)
        if total < mass:
            c_lo = mid
        elif total > mass:
            c_hi = mid
        else:
            c_lo = mid
            c_hi = mid
            break
    c = 0.5 * (c_lo + c_hi)
    total = 0.0
    nfree = 0
    for t in range(T):
        gap = c - pv[t]
        if gap > 0.0:
            n[t] = sqrt(gap / beta) - hv[t]
            if n[t] < 0.0:
                n[t] = 0.0
        total += n[t]
        if n[t] > 0.0:
            nfree += 1
    resid = mass - total
    if resid != 0.0 and nfree > 0:
        for t in range(T):
            if n[t] > 0.0:
                n[t] += resid / nfree
                if n[t] < 0.0:
                    n[t] = 0.0
    return c, out


def water_level(h, double mass):
    cdef double[::1] hs = np.sort(np.asarray(h, dtype=float))
    cdef Py_ssize_t k, T = hs.shape[0]
    cdef double filled = 0.0, v
    if mass <= 0:
        return hs[0]
    for k in range(T):
        filled += hs[k]
        v = (mass + filled) / (k + 1)
        if k + 1 == T or v <= hs[k + 1]:
            return v
    raise AssertionError("unreachable")


def brd_sweep(const long long[::1] order, const double[::1] values, long long[::1] slot,
              double[::1] loads, const double[::1] prices, const double[::1] h,
              double beta, double tol):
    cdef Py_ssize_t T = h.shape[0], idx, t
    cdef long long i, s, target, best_t
    cdef long changes = 0
    cdef double best_cost, cost, y, current, candidate, gain
    with nogil:
        for idx in range(order.shape[0]):
            i = order[idx]
            s = slot[i]
            if s >= 0:
                loads[s] -= 1.0
            best_t = -1
            best_cost = INFINITY
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
                target = best_t
                gain = candidate
            else:
                target = -1
                gain = 0.0
            if target != s and gain > current + tol:
                s = target
                changes += 1
            slot[i] = s
            if s >= 0:
                loads[s] += 1.0
    return changes
