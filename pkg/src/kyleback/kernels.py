"""Compiled path loops for the three hot strategy families.

Each kernel reproduces the generic numpy stepper in ``simulate`` operation
for operation, so both backends agree to rounding.
"""
import math

import numpy as np

from ._accel import njit


@njit
def bridge_paths(Z, dz, dm, target, gain, kappa, t, lam, dt):
    n, N = dz.shape
    X = np.zeros((n, N + 1))
    xi = np.zeros((n, N + 1))
    th = np.zeros((n, N))
    for p in range(n):
        x = 0.0
        s = 0.0
        for i in range(N):
            y = x + Z[p, i]
            rate = (target[p] - y + kappa * t[i]) * gain[i] + kappa
            dx = rate * dt + dm[p, i]
            x = x + dx
            s = s + lam[i] * (dx + dz[p, i])
            X[p, i + 1] = x
            xi[p, i + 1] = s
            th[p, i] = rate
    return X, xi, th


@njit
def feedback_paths(dz, dV, V, lam, beta, lz_post, lv_post, p0, k_switch, catch_up, dt):
    n, N = dz.shape
    X = np.zeros((n, N + 1))
    xi = np.zeros((n, N + 1))
    th = np.zeros((n, N))
    for p in range(n):
        x = 0.0
        s = 0.0
        for i in range(N):
            P = p0 + s
            if i >= k_switch:
                dx = lz_post[i] * dz[p, i] + lv_post[i] * dV[p, i]
                da = 0.0
            elif catch_up and i == k_switch - 1:
                dx = (V[p, i + 1] - P) / lam[i] - dz[p, i]
                da = dx
            else:
                k = lam[i]
                g = k * beta[i]
                da = (V[p, i] - P) * (-math.expm1(-g * dt)) / k
                dx = da
            x = x + dx
            s = s + lam[i] * (dx + dz[p, i])
            X[p, i + 1] = x
            xi[p, i + 1] = s
            th[p, i] = da / dt
    return X, xi, th


@njit
def barrier_paths(Z, dz, tau_bar, kstop, t, lam, dt, implicit):
    n, N = dz.shape
    X = np.zeros((n, N + 1))
    xi = np.zeros((n, N + 1))
    th = np.zeros((n, N))
    flagged = np.zeros(n, dtype=np.bool_)
    for p in range(n):
        x = 0.0
        s = 0.0
        for i in range(N):
            da = 0.0
            if i < kstop[p] and not flagged[p]:
                u = 1.0 + x + Z[p, i]
                if implicit:
                    b = u * (1.0 - dt / (tau_bar[p] - t[i])) + dz[p, i]
                    r = math.sqrt(b * b + 4.0 * dt)
                    if b >= 0.0:
                        unew = 0.5 * (b + r)
                    else:
                        unew = 2.0 * dt / (r - b)
                    da = unew - u - dz[p, i]
                else:
                    da = (1.0 / u - u / (tau_bar[p] - t[i])) * dt
                    if u + da + dz[p, i] <= 0.0:
                        flagged[p] = True
            dx = da
            x = x + dx
            s = s + lam[i] * (dx + dz[p, i])
            X[p, i + 1] = x
            xi[p, i + 1] = s
            th[p, i] = da / dt
    return X, xi, th, flagged
