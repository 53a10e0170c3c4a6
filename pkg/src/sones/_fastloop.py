"""Compiled RK4 kernel for closed loops on polynomial maps.

Mirrors :func:`sones.dynamics.sones_rhs` and :func:`sones.dynamics.grad2_rhs`
on flattened states; the numpy versions remain the reference and the tests
compare both.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .errors import DivergenceError


@numba.njit(cache=True)
def _poly(exps, coeffs, x):
    total = 0.0
    for r in range(coeffs.size):
        term = coeffs[r]
        for i in range(x.size):
            e = exps[r, i]
            if e:
                term *= x[i] ** e
        total += term
    return total


@numba.njit(cache=True)
def _output(exps, coeffs, a, w, theta, t):
    x = np.empty(theta.size)
    for i in range(theta.size):
        x[i] = theta[i] + a[i] * math.sin(w[i] * t)
    return _poly(exps, coeffs, x)


@numba.njit(cache=True)
def _n_entry(a, w, i, j, t):
    if i == j:
        return -8.0 / (a[i] * a[i]) * math.cos(2.0 * w[i] * t)
    return -4.0 / (a[i] * a[j]) * math.cos((w[i] + w[j]) * t)


@numba.njit(cache=True)
def _p_entry(a, w, i, j, k, t):
    if i == j and j == k:
        return -48.0 / (a[i] ** 3) * math.sin(3.0 * w[i] * t)
    if i == j or j == k or i == k:
        if i == j:
            rep, other = i, k
        elif j == k:
            rep, other = j, i
        else:
            rep, other = i, j
        return -16.0 / (a[rep] * a[rep] * a[other]) * math.sin((2.0 * w[rep] + w[other]) * t)
    return -8.0 / (a[i] * a[j] * a[k]) * math.sin((w[i] + w[j] + w[k]) * t)


@numba.njit(cache=True)
def _rhs(x, t, exps, coeffs, a, w, m, K, wl, wh, wr, sones):
    p = a.size
    q = p * p
    out = np.empty_like(x)
    theta = x[:p]
    H = x[p : 2 * p]
    eta = x[-1]
    y = _output(exps, coeffs, a, w, theta, t)
    hp = y - eta
    for i in range(p):
        out[p + i] = wl * (hp * _n_entry(a, w, i, m, t) - H[i])
    out[-1] = wh * (y - eta)
    if not sones:
        for i in range(p):
            out[i] = K[i] * H[i]
        return out
    L = x[2 * p : 2 * p + q].reshape((p, p))
    T = x[2 * p + q : 2 * p + 2 * q].reshape((p, p))
    for i in range(p):
        acc = 0.0
        for j in range(p):
            acc += L[i, j] * H[j]
        out[i] = -K[i] * acc
    LTL = L @ T @ L
    for i in range(p):
        for j in range(p):
            out[2 * p + i * p + j] = wr * (L[i, j] - LTL[i, j])
            out[2 * p + q + i * p + j] = wl * (hp * _p_entry(a, w, m, i, j, t) - T[i, j])
    return out


@numba.njit(cache=True)
def _integrate(x0, n_steps, dt, every, exps, coeffs, a, w, m, K, wl, wh, wr, sones):
    n_rec = n_steps // every + 1
    states = np.empty((n_rec, x0.size))
    ys = np.empty(n_rec)
    p = a.size
    x = x0.copy()
    states[0] = x
    ys[0] = _output(exps, coeffs, a, w, x[:p], 0.0)
    for k in range(n_steps):
        t = k * dt
        k1 = _rhs(x, t, exps, coeffs, a, w, m, K, wl, wh, wr, sones)
        k2 = _rhs(x + 0.5 * dt * k1, t + 0.5 * dt, exps, coeffs, a, w, m, K, wl, wh, wr, sones)
        k3 = _rhs(x + 0.5 * dt * k2, t + 0.5 * dt, exps, coeffs, a, w, m, K, wl, wh, wr, sones)
        k4 = _rhs(x + dt * k3, t + dt, exps, coeffs, a, w, m, K, wl, wh, wr, sones)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for v in x:
            if not math.isfinite(v):
                return states, ys, k + 1
        if (k + 1) % every == 0:
            r = (k + 1) // every
            states[r] = x
            ys[r] = _output(exps, coeffs, a, w, x[:p], (k + 1) * dt)
    return states, ys, -1


def run(h, cfg, gains, x0, n_steps, dt, every, loop):
    exps, coeffs = h._arrays()
    if coeffs.size == 0:
        exps, coeffs = np.zeros((1, h.dimension), dtype=np.int64), np.zeros(1)
    fg = gains.filters
    states, ys, failed = _integrate(
        np.ascontiguousarray(x0, dtype=float),
        int(n_steps),
        float(dt),
        int(every),
        np.ascontiguousarray(exps, dtype=np.int64),
        coeffs,
        cfg.a,
        cfg.omega,
        int(cfg.axis),
        gains.K_diag,
        float(fg.omega_l),
        float(fg.omega_h),
        float(fg.omega_r),
        loop == "sones",
    )
    if failed >= 0:
        raise DivergenceError(failed * dt)
    ts = dt * every * np.arange(states.shape[0])
    return ts, states, ys
