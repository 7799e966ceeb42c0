"""Compiled inner loops for the population game.

These mirror :func:`v2rgame.mac.solve_fixed_point` (saturated, Newton),
:func:`v2rgame.mac.fixed_point_sensitivity` and the payoff formulas of
:mod:`v2rgame.game`; the tests check them against those references.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def stage_sums(b_rev, gamma):
    A = 0.0
    B = 0.0
    dA = 0.0
    dB = 0.0
    for b in b_rev:
        dA = dA * gamma + A
        dB = dB * gamma + B
        A = A * gamma + 1.0
        B = B * gamma + b
    return A, B, dA, dB


@njit(cache=True)
def saturated_fixed_point(b_rev, n, guess, tol):
    """Collision probability, attempt rate and their ``n``-derivatives."""
    if n <= 1.0:
        A, B, _, _ = stage_sums(b_rev, 0.0)
        return 0.0, A / B, 0.0, 0.0
    lo, hi = 0.0, 1.0
    if 0.0 < guess < 1.0:
        gamma = guess
    else:
        gamma = 1.0 - (1.0 - 1.0 / b_rev[-1]) ** (n - 1.0)
    beta = 0.0
    dbeta_dg = 0.0
    for _ in range(200):
        A, B, dA, dB = stage_sums(b_rev, gamma)
        beta = A / B
        dbeta_dg = (dA * B - A * dB) / (B * B)
        q = (1.0 - beta) ** (n - 1.0)
        g = 1.0 - q - gamma
        if g > 0:
            lo = gamma
        else:
            hi = gamma
        if abs(g) < tol or hi - lo <= 4.5e-16 * hi:
            break
        dg = (n - 1.0) * q / (1.0 - beta) * dbeta_dg - 1.0
        step = gamma - g / dg
        gamma = step if lo < step < hi else 0.5 * (lo + hi)
    log1m = math.log1p(-beta)
    q = math.exp((n - 1.0) * log1m)
    g_n = -q * log1m
    g_g = (n - 1.0) * q / (1.0 - beta) * dbeta_dg - 1.0
    dgamma = -g_n / g_g
    return gamma, beta, dgamma, dbeta_dg * dgamma


@njit(cache=True)
def channel_row(b_rev, M, sigma, T_o, tc, n, guess, out):
    """Fill ``out`` with ``n, gamma, beta, k0, k1, kappa2, dk0, dk1, dkappa2``."""
    n = max(n, 0.0)
    gamma, beta, dgamma, dbeta = saturated_fixed_point(b_rev, n, guess, 1e-15)
    e = max(n - 1.0, 0.0)
    log1m = math.log1p(-beta)
    q = math.exp(e * log1m)
    s = beta * q
    if n > 1.0:
        ds = dbeta * (q - e * s / (1.0 - beta)) + s * log1m
    else:
        ds = dbeta
    inv_s = 1.0 / s
    k0 = sigma * inv_s + n * (T_o - tc) + (inv_s + 1.0 - 1.0 / beta) * tc
    dk0 = -(sigma + tc) * ds * inv_s * inv_s + (T_o - tc) + tc * dbeta / (beta * beta)
    keep = 1.0 - gamma ** M
    dkeep = -M * gamma ** (M - 1) * dgamma if gamma > 0 else 0.0
    out[0] = n
    out[1] = gamma
    out[2] = beta
    out[3] = k0
    out[4] = keep * k0 * s
    out[5] = keep * s
    out[6] = dk0
    out[7] = dkeep * k0 * s + keep * (dk0 * s + k0 * ds)
    out[8] = dkeep * s + keep * ds


@njit(cache=True)
def payoff_matrix(x, t, a, w_served, w_delay, w_charge, phi, available):
    """Payoffs ``F`` (``-inf`` where unavailable) and the potential."""
    C, L = x.shape
    F = np.empty((C, L))
    theta = 0.0
    for c in range(C):
        theta -= w_charge[c] * x[c].sum()
    for l in range(L):
        k0, k1, kappa2 = t[3, l], t[4, l], t[5, l]
        dk0, dk1, dkappa2 = t[6, l], t[7, l], t[8, l]
        airtime = 0.0
        num = 0.0
        delay_mass = 0.0
        for c in range(C):
            airtime += x[c, l] * a[c, l]
            num += w_served[c] * x[c, l]
            delay_mass += w_delay[c] * x[c, l]
        inv = 1.0 / (k0 + airtime)
        served = num * inv
        T = k1 + kappa2 * airtime
        theta += served - delay_mass * T
        common = dk0 * served * inv + (dk1 + dkappa2 * airtime) * delay_mass
        for c in range(C):
            if available[c, l]:
                F[c, l] = phi * (w_served[c] * inv - a[c, l] * (inv * served + kappa2 * delay_mass)
                                 - w_delay[c] * T - common - w_charge[c])
            else:
                F[c, l] = -np.inf
    return F, phi * theta


@njit(cache=True)
def excess(x, masses, F):
    C, L = x.shape
    k = np.zeros((C, L))
    for c in range(C):
        avg = 0.0
        for l in range(L):
            if x[c, l] != 0.0 and np.isfinite(F[c, l]):
                avg += x[c, l] * F[c, l]
        avg /= masses[c]
        for l in range(L):
            d = F[c, l] - avg
            if d > 0.0:
                k[c, l] = d
    return k


@njit(cache=True)
def velocity(x, masses, k, scale):
    C, L = x.shape
    V = np.empty((C, L))
    for c in range(C):
        tot = k[c].sum()
        for l in range(L):
            V[c, l] = (masses[c] * k[c, l] - x[c, l] * tot) / scale
    return V
