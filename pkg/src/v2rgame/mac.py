"""Analytic model of 802.11 DCF contention for one channel.

Time is measured in idle-slot units.  A *generic slot* is the interval
between two consecutive back-off decrements: an idle slot lasts
``sigma``, a successful transmission ``T_s + T_o + sigma`` and a
collision ``T_c + sigma``.  Stations retry up to ``M`` times (stages
``0..M-1``); the contention window doubles up to stage ``m``.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np


class AccessMode(str, enum.Enum):
    BASIC = "basic"
    RTS_CTS = "rts_cts"


class FixedPointError(ArithmeticError):
    """Raised when the collision-probability iteration does not converge."""

    def __init__(self, message, gamma=None, residual=None):
        super().__init__(message)
        self.gamma = gamma
        self.residual = residual


@dataclass(frozen=True)
class MacParameters:
    """DCF constants of one channel.

    ``T_s`` is the payload duration, ``T_o`` the per-transmission overhead
    and ``T_c`` the RTS collision duration, all in slots.  ``arrival_rate``
    is the per-slot packet arrival probability; zero means saturated.
    In basic access a collision occupies the channel for a whole frame,
    so ``T_c`` is ignored and ``T_o + T_s`` is used instead.
    """

    cw_min: int = 32
    m: int = 5
    M: int = 7
    sigma: float = 1.0
    T_s: float = 50.0
    T_o: float = 5.0
    T_c: float = 8.0
    mode: AccessMode = AccessMode.RTS_CTS
    arrival_rate: float = 0.0
    buffer: int = 10

    def __post_init__(self):
        object.__setattr__(self, "mode", AccessMode(self.mode))
        if self.cw_min < 1:
            raise ValueError("cw_min must be >= 1")
        if not 0 <= self.m < self.M:
            raise ValueError(f"need 0 <= m < M, got m={self.m}, M={self.M}")
        if min(self.sigma, self.T_s, self.T_o, self.T_c) < 0:
            raise ValueError("durations must be nonnegative")
        if self.arrival_rate < 0:
            raise ValueError("arrival_rate must be nonnegative")

    @classmethod
    def from_windows(cls, cw_min, cw_max, **kwargs):
        m = math.log2(cw_max / cw_min)
        if abs(m - round(m)) > 1e-12:
            raise ValueError("cw_max / cw_min must be a power of two")
        return cls(cw_min=cw_min, m=int(round(m)), **kwargs)

    @property
    def cw_max(self) -> int:
        return self.cw_min * 2 ** self.m

    @property
    def last_stage(self) -> int:
        return self.M - 1

    @property
    def saturated(self) -> bool:
        return self.arrival_rate == 0

    @property
    def collision_slots(self) -> float:
        if self.mode is AccessMode.BASIC:
            return self.T_o + self.T_s
        return self.T_c

    @functools.cached_property
    def windows(self) -> np.ndarray:
        w = np.array([contention_window(self, j) for j in range(self.M)], dtype=float)
        w.flags.writeable = False
        return w

    @functools.cached_property
    def _stage_means_reversed(self) -> tuple:
        return tuple(0.5 * (w + 1.0) for w in reversed(self.windows.tolist()))


@dataclass(frozen=True)
class DcfFixedPoint:
    gamma: float
    beta_c: float
    beta: float
    p0: float
    n: float
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class ChannelStateProbs:
    p_idle: float
    p_succ: float
    p_coll: float

    def as_array(self):
        return np.array([self.p_idle, self.p_succ, self.p_coll])


@dataclass(frozen=True)
class PayloadMix:
    """Payload durations ``a`` (slots) drawn with probabilities ``q``."""

    q: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, float))
        a = np.atleast_1d(np.asarray(self.a, float))
        if q.shape != a.shape:
            raise ValueError("q and a must have the same shape")
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
            raise ValueError("q must be a probability vector")
        order = np.argsort(a, kind="stable")
        object.__setattr__(self, "q", q[order])
        object.__setattr__(self, "a", a[order])

    @classmethod
    def single(cls, a):
        return cls([1.0], [a])

    @classmethod
    def from_regions(cls, region_probs, frame_len, rates):
        """Mixture of ``frame_len / rate_f`` weighted by region occupancy."""
        p = np.asarray(getattr(region_probs, "p", region_probs), float)
        return cls(p, frame_len / np.asarray(rates, float))

    @property
    def mean(self) -> float:
        return float(self.q @ self.a)


def contention_window(params: MacParameters, j: int) -> int:
    """Contention window ``W_j``: ``2^j cw_min`` up to stage ``m``, then capped."""
    if not 0 <= j < params.M:
        raise IndexError(f"stage {j} outside 0..{params.M - 1}")
    return params.cw_min * 2 ** min(j, params.m)


def _stage_sums(params, gamma):
    """Horner sums ``A = sum g^i``, ``B = sum b_i g^i`` and their derivatives."""
    A = B = dA = dB = 0.0
    for b in params._stage_means_reversed:
        dA = dA * gamma + A
        dB = dB * gamma + B
        A = A * gamma + 1.0
        B = B * gamma + b
    return A, B, dA, dB


def attempt_rate(params: MacParameters, gamma: float) -> float:
    """Attempt rate with a nonempty buffer, ``sum g^i / sum b_i g^i``.

    ``b_i = (W_i + 1) / 2`` is the mean number of generic slots spent in
    stage ``i`` including the attempt slot; the sums run over all
    ``M`` retry stages.
    """
    A, B, _, _ = _stage_sums(params, gamma)
    return A / B


def attempt_rate_derivative(params: MacParameters, gamma: float) -> float:
    A, B, dA, dB = _stage_sums(params, gamma)
    return (dA * B - A * dB) / (B * B)


def gamma_of_beta(beta: float, n: float) -> float:
    """Collision probability seen by a station among ``n`` contenders."""
    return -math.expm1(max(n - 1.0, 0.0) * math.log1p(-beta)) if beta < 1 else float(n > 1)


def empty_probability(params: MacParameters, mean_busy_service: float) -> float:
    """Probability that the transmit buffer is empty.

    Offered-load approximation ``1 - arrival_rate * E[service]``; zero in
    saturation.
    """
    if params.saturated:
        return 0.0
    if not mean_busy_service > 0:
        raise ValueError("mean_busy_service must be positive")
    return max(0.0, 1.0 - params.arrival_rate * mean_busy_service)


def channel_state_probs(beta: float, n: float) -> ChannelStateProbs:
    """Idle / success / collision probabilities of a slot seen while backing off.

    The other ``n - 1`` stations attempt independently with probability
    ``beta``.  Exponents are clamped at zero so real-valued ``n`` below
    two stays continuous.
    """
    others = max(n - 1.0, 0.0)
    if beta >= 1.0:
        idle = float(others == 0)
        succ = float(others == 1)
    else:
        log1m = math.log1p(-beta)
        idle = math.exp(others * log1m)
        succ = others * beta * math.exp(max(n - 2.0, 0.0) * log1m)
    coll = max(0.0, 1.0 - idle - succ)
    return ChannelStateProbs(idle, succ, coll)


def _others_rate(gamma, n):
    if n <= 1:
        return 0.0
    return -math.expm1(math.log1p(-gamma) / (n - 1.0)) if gamma < 1 else 1.0


def slot_mean(states: ChannelStateProbs, params: MacParameters) -> float:
    return (params.sigma + states.p_succ * (params.T_s + params.T_o)
            + states.p_coll * params.collision_slots)


def stage_pmf(gamma: float, m: int) -> np.ndarray:
    """Distribution of the number of collisions before success (``k <= m``)
    or drop (``k = m + 1``)."""
    k = np.arange(m + 1)
    out = np.empty(m + 2)
    out[:-1] = (1.0 - gamma) * gamma ** k
    out[-1] = gamma ** (m + 1)
    return out


def slot_pgf(states: ChannelStateProbs, params: MacParameters, z):
    """PGF of the generic slot duration while the tagged station backs off."""
    s = params.sigma
    return (states.p_idle * z ** s
            + states.p_succ * z ** (params.T_s + params.T_o + s)
            + states.p_coll * z ** (params.collision_slots + s))


def _uniform_pgf(w, z):
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    near = np.abs(1.0 - z) < 1e-9
    safe = np.where(near, 0.5, z)
    val = (1.0 - safe ** w) / (w * (1.0 - safe))
    # second-order expansion around z = 1
    d = z - 1.0
    series = 1.0 + d * (w - 1) / 2 + d * d * (w - 1) * (w - 2) / 6
    out = np.where(near, series, val)
    return out if out.ndim else out.item()


def backoff_stage_pgf(params: MacParameters, j: int, z):
    """PGF of the back-off counter drawn uniformly from ``{0..W_j - 1}``."""
    return _uniform_pgf(contention_window(params, j), z)


def _collision_weights(mix: PayloadMix, beta: float, n: float) -> np.ndarray:
    """Probability that the longest payload among colliding others is ``a_j``.

    ``psi_j = (1 - beta + beta Q_j)^(n-1) / (1 - (1 - beta)^(n-1))`` with
    ``Q_j`` the payload CDF; the weights are consecutive differences.
    """
    others = max(n - 1.0, 0.0)
    denom = -math.expm1(others * math.log1p(-beta)) if beta < 1 else 1.0
    if denom <= 0:
        w = np.zeros_like(mix.q)
        w[-1] = 1.0
        return w
    Q = np.concatenate([[0.0], np.cumsum(mix.q)])
    Q[-1] = 1.0
    psi = (1.0 - beta + beta * Q) ** others / denom
    return np.diff(psi)


def _own_collision_durations(params, mix, fp):
    """Mean and pairing matrix of the tagged station's own collision time."""
    if params.mode is AccessMode.RTS_CTS:
        return None
    w = _collision_weights(mix, _others_rate(fp.gamma, fp.n), fp.n)
    pair = np.maximum.outer(mix.a, mix.a)
    return w, pair


def attempt_service_slots(params: MacParameters, k: int, states: ChannelStateProbs,
                          payload: float | None = None) -> float:
    """Expected service time of a frame that needs ``k`` collisions first.

    ``k`` runs over ``0..M``; ``k = M`` is the drop case.  Every attempt
    also occupies the slot ``sigma`` in which it starts.
    """
    K = params.last_stage
    if not 0 <= k <= K + 1:
        raise IndexError(f"k={k} outside 0..{K + 1}")
    a = params.T_s if payload is None else payload
    s = params.sigma
    w = params.windows
    backoff = 0.5 * float(np.sum(w[:min(k, K) + 1] - 1.0)) * slot_mean(states, params)
    if params.mode is AccessMode.BASIC:
        if k <= K:
            return (k + 1) * params.T_o + a + k * a + (k + 1) * s + backoff
        return (K + 1) * (params.T_o + a + s) + backoff
    if k <= K:
        return k * params.T_c + params.T_o + a + (k + 1) * s + backoff
    return (K + 1) * (params.T_c + s) + backoff


def mean_service_time(params: MacParameters, fp: DcfFixedPoint, states: ChannelStateProbs,
                      mix: PayloadMix | None = None) -> float:
    """Mean head-of-line service time (slots) of the tagged station.

    Averages the per-attempt-count service times over the stage
    distribution and over payloads.  In saturation this equals
    ``(1 - gamma^M) E[U] / throughput`` with the throughput of
    :func:`throughput`.
    """
    mix = PayloadMix.single(params.T_s) if mix is None else mix
    K = params.last_stage
    pk = stage_pmf(fp.gamma, K)
    w = params.windows
    cum_backoff = 0.5 * np.cumsum(w - 1.0) * slot_mean(states, params)
    backoff = float(pk[:-1] @ cum_backoff + pk[-1] * cum_backoff[-1])
    s = params.sigma
    k = np.arange(K + 1)
    attempts = float(pk[:-1] @ (k + 1) + pk[-1] * (K + 1))
    collisions = attempts - (1.0 - pk[-1])
    successes = 1.0 - pk[-1]
    if params.mode is AccessMode.RTS_CTS:
        own = attempts * s + collisions * params.T_c + successes * (params.T_o + mix.mean)
        return backoff + own
    weights, pair = _own_collision_durations(params, mix, fp)
    coll_payload = float(mix.q @ (pair @ weights))
    own = (attempts * (s + params.T_o) + collisions * coll_payload + successes * mix.mean)
    return backoff + own


def service_time_pgf(params: MacParameters, fp: DcfFixedPoint, states: ChannelStateProbs,
                     z, mix: PayloadMix | None = None):
    """PGF of the service time: per-stage uniform back-off counts composed
    with the generic-slot PGF, plus the tagged station's own attempts."""
    mix = PayloadMix.single(params.T_s) if mix is None else mix
    K = params.last_stage
    pk = stage_pmf(fp.gamma, K)
    chi = slot_pgf(states, params, z)
    stage = np.cumprod([backoff_stage_pgf(params, j, chi) for j in range(K + 1)])
    s = params.sigma
    total = 0.0
    if params.mode is AccessMode.RTS_CTS:
        for q, a in zip(mix.q, mix.a):
            succ = sum(pk[k] * z ** (k * (params.T_c + s) + params.T_o + s + a) * stage[k]
                       for k in range(K + 1))
            total = total + q * succ
        return total + pk[-1] * z ** ((K + 1) * (params.T_c + s)) * stage[K]
    weights, pair = _own_collision_durations(params, mix, fp)
    for l, (q, a) in enumerate(zip(mix.q, mix.a)):
        coll = z ** (params.T_o + s) * np.sum(weights * z ** pair[l])
        succ = sum(pk[k] * z ** (params.T_o + s + a) * coll ** k * stage[k] for k in range(K + 1))
        total = total + q * (succ + pk[-1] * coll ** (K + 1) * stage[K])
    return total


def laplace_service(params: MacParameters, fp: DcfFixedPoint, states: ChannelStateProbs,
                    s: float, mix: PayloadMix | None = None) -> float:
    """Laplace transform ``E[exp(-s T)]`` of the service time.

    ``phi_k(s)`` is the product over stages ``0..k`` of the uniform
    back-off transform evaluated at the generic-slot transform, and in
    basic access ``g_l(s)`` is the transform of a collision involving a
    payload ``a_l``.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    mix = PayloadMix.single(params.T_s) if mix is None else mix
    K, g, sig = params.last_stage, fp.gamma, params.sigma
    durations = (sig, params.T_s + params.T_o + sig, params.collision_slots + sig)
    one_minus_x = sum(p * -math.expm1(-s * d) for p, d in zip(states.as_array(), durations))
    log_x = math.log1p(-one_minus_x)
    phi = np.ones(K + 1)
    acc = 1.0
    for i, w in enumerate(params.windows):
        if one_minus_x > 0:
            acc *= -math.expm1(w * log_x) / (w * one_minus_x)
        phi[i] = acc
    k = np.arange(K + 1)
    head = (1.0 - g) * g ** k
    if params.mode is AccessMode.RTS_CTS:
        succ = float(np.sum(head * np.exp(-s * (params.T_o + sig + k * (params.T_c + sig))) * phi))
        body = float(mix.q @ np.exp(-s * mix.a)) * succ
        return body + g ** (K + 1) * math.exp(-s * (K + 1) * (params.T_c + sig)) * phi[K]
    weights, pair = _own_collision_durations(params, mix, fp)
    total = 0.0
    for l in range(len(mix.a)):
        gl = float(np.sum(weights * np.exp(-s * pair[l])))
        over = math.exp(-s * (params.T_o + sig))
        succ = float(np.sum(head * over ** (k + 1) * math.exp(-s * mix.a[l]) * phi * gl ** k))
        drop = g ** (K + 1) * over ** (K + 1) * phi[K] * gl ** (K + 1)
        total += mix.q[l] * (succ + drop)
    return total


def _busy_service(params, gamma, n):
    beta_o = _others_rate(gamma, n)
    fp = DcfFixedPoint(gamma, attempt_rate(params, gamma), beta_o, 0.0, n)
    return mean_service_time(params, fp, channel_state_probs(beta_o, n))


def _fixed_point_map(params, gamma, n):
    beta_c = attempt_rate(params, gamma)
    p0 = 0.0
    if not params.saturated and n > 1:
        p0 = empty_probability(params, _busy_service(params, gamma, n))
    elif not params.saturated:
        p0 = empty_probability(params, _busy_service(params, 0.0, n))
    beta = (1.0 - p0) * beta_c
    return gamma_of_beta(beta, n), beta_c, beta, p0


def solve_fixed_point(params: MacParameters, n: float, tol: float = 1e-12,
                      damping: float = 0.5, gamma0: float = 0.5,
                      max_iter: int = 10_000, method: str = "damped",
                      guess: float | None = None) -> DcfFixedPoint:
    """Solve ``gamma = Gamma((1 - p0) beta_c(gamma))`` for ``n`` contenders.

    ``method="damped"`` runs ``g <- (1-d) g + d Gamma(g)`` until the
    residual ``|Gamma(g) - g|`` drops below ``tol``.  ``method="newton"``
    is a bracketed Newton iteration for the saturated case, used by the
    game module where the solve sits in an inner loop; ``guess`` seeds it.
    """
    n_eff = float(n)
    if n_eff <= 1.0:
        g, beta_c, beta, p0 = _fixed_point_map(params, 0.0, n_eff)
        return DcfFixedPoint(0.0, beta_c, beta, p0, n_eff, 0.0, 0)
    if method == "newton" and params.saturated:
        return _solve_newton(params, n_eff, tol, max_iter, guess)
    gamma = gamma0
    for it in range(1, max_iter + 1):
        target, beta_c, beta, p0 = _fixed_point_map(params, gamma, n_eff)
        residual = abs(target - gamma)
        if residual < tol:
            return DcfFixedPoint(target, *_fixed_point_map(params, target, n_eff)[1:],
                                 n_eff, residual, it)
        gamma = (1.0 - damping) * gamma + damping * target
    raise FixedPointError(
        f"fixed point did not converge for n={n}: gamma={gamma:.6g}, residual={residual:.3e}",
        gamma=gamma, residual=residual)


def _solve_newton(params, n, tol, max_iter, guess=None):
    lo, hi = 0.0, 1.0
    if guess is not None and 0.0 < guess < 1.0:
        gamma = guess
    else:
        gamma = 1.0 - (1.0 - 2.0 / (params.cw_min + 1)) ** (n - 1)
    for it in range(1, max_iter + 1):
        A, B, dA, dB = _stage_sums(params, gamma)
        beta = A / B
        dbeta = (dA * B - A * dB) / (B * B)
        q = (1.0 - beta) ** (n - 1)
        g = 1.0 - q - gamma
        if g > 0:
            lo = gamma
        else:
            hi = gamma
        # the bracket stops shrinking a few ulps wide
        if abs(g) < tol * 1e-3 or hi - lo <= 4.5e-16 * hi:
            return DcfFixedPoint(gamma, beta, beta, 0.0, n, abs(g), it)
        dg = (n - 1) * q / (1.0 - beta) * dbeta - 1.0
        step = gamma - g / dg
        gamma = step if lo < step < hi else 0.5 * (lo + hi)
    raise FixedPointError(f"Newton solve did not converge for n={n}", gamma=gamma, residual=abs(g))


def fixed_point_sensitivity(params: MacParameters, fp: DcfFixedPoint) -> tuple[float, float]:
    """Derivatives ``(d gamma / d n, d beta / d n)`` of the solved fixed point.

    Saturated channels use implicit differentiation of
    ``gamma = 1 - (1 - beta_c(gamma))^(n-1)``; otherwise a central
    difference of the solved fixed point is returned.
    """
    n = fp.n
    if n <= 1.0:
        return 0.0, 0.0
    if params.saturated:
        beta = fp.beta
        dbeta_dg = attempt_rate_derivative(params, fp.gamma)
        log1m = math.log1p(-beta)
        q = math.exp((n - 1) * log1m)
        g_n = -q * log1m
        g_g = (n - 1) * q / (1.0 - beta) * dbeta_dg - 1.0
        dgamma = -g_n / g_g
        return dgamma, dbeta_dg * dgamma
    h = 1e-5 * max(1.0, n)
    lo_n = max(n - h, 1.0)
    hi_fp = solve_fixed_point(params, n + h, tol=1e-14)
    lo_fp = solve_fixed_point(params, lo_n, tol=1e-14)
    span = n + h - lo_n
    return (hi_fp.gamma - lo_fp.gamma) / span, (hi_fp.beta - lo_fp.beta) / span


def throughput(params: MacParameters, fp: DcfFixedPoint, frame_len: float = 1.0,
               mean_payload: float | None = None, n: float | None = None) -> float:
    """Per-station throughput from the renewal argument over generic slots.

    ``frame_len / [sigma/s + n (T_o - T_c) + (1/s + 1 - 1/beta) T_c + n E[a]]``
    with ``s = beta (1 - beta)^(n-1)`` the per-slot success probability of
    the tagged station and ``E[a]`` the mean payload duration over the
    contenders.  Units follow ``frame_len`` per slot.
    """
    n = fp.n if n is None else n
    beta = fp.beta
    if not 0 < beta <= 1:
        raise ValueError(f"degenerate attempt rate beta={beta}")
    a = params.T_s if mean_payload is None else mean_payload
    tc = params.collision_slots
    s = beta * (1.0 - beta) ** max(n - 1.0, 0.0)
    if s <= 0:
        raise ValueError("zero success probability")
    denom = (params.sigma / s + n * (params.T_o - tc)
             + (1.0 / s + 1.0 - 1.0 / beta) * tc + n * a)
    if not denom > 0:
        raise ArithmeticError(f"nonpositive throughput denominator {denom}")
    return frame_len / denom


def analyze(params: MacParameters, n: float, method: str = "damped"):
    """Solve the fixed point and return it with the back-off channel view."""
    fp = solve_fixed_point(params, n, method=method)
    return fp, channel_state_probs(fp.beta, n)
