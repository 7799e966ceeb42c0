"""Multichannel population game over vehicle classes.

Each class ``c`` holds a mass ``n_c`` of OBUs split across channels;
``x[c, j]`` is the mass of class ``c`` on channel ``j``.  Channel
performance follows the DCF model of :mod:`v2rgame.mac` evaluated at the
real-valued occupancy ``n_j = sum_c x[c, j]``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, mac
from .traffic import count_pmf


def _compiled_constants(p: mac.MacParameters):
    if not p.saturated:
        return None
    b_rev = np.array(p._stage_means_reversed)
    return b_rev, p.M, float(p.sigma), float(p.T_o), float(p.collision_slots)


class IntegrationError(RuntimeError):
    """The potential decreased along a BNN step; the step size is too large."""


@dataclass(frozen=True)
class ChannelSpec:
    """One orthogonal channel: DCF constants and per-(class, region) rates in bits/slot."""

    mac: mac.MacParameters
    rates: np.ndarray
    name: str = ""

    def __post_init__(self):
        rates = np.atleast_2d(np.asarray(self.rates, float))
        if np.any(rates <= 0):
            raise ValueError(f"channel {self.name!r}: rates must be positive")
        object.__setattr__(self, "rates", rates)


@dataclass
class GameState:
    x: np.ndarray
    masses: np.ndarray
    available: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, float)
        self.masses = np.asarray(self.masses, float)
        self.available = np.asarray(self.available, bool)
        if self.x.shape != self.available.shape or self.x.shape[0] != len(self.masses):
            raise ValueError("inconsistent GameState shapes")

    @classmethod
    def uniform(cls, masses, available):
        available = np.asarray(available, bool)
        masses = np.asarray(masses, float)
        share = masses / available.sum(axis=1)
        return cls(available * share[:, None], masses, available)

    @classmethod
    def random(cls, masses, available, rng):
        available = np.asarray(available, bool)
        w = rng.dirichlet(np.ones(available.shape[1]), size=available.shape[0]) * available
        w /= w.sum(axis=1, keepdims=True)
        return cls(w * np.asarray(masses, float)[:, None], masses, available)

    def copy(self, x=None):
        return GameState(self.x.copy() if x is None else x, self.masses, self.available)

    def check(self, tol=1e-9):
        if np.any(self.x < -tol):
            raise ValueError("negative mass in state")
        if np.any(self.x[~self.available] != 0):
            raise ValueError("mass on an unavailable channel")
        drift = np.abs(self.x.sum(axis=1) - self.masses).max()
        if drift > tol * max(1.0, self.masses.max()):
            raise ValueError(f"class masses violated by {drift:.3e}")

    @property
    def occupancy(self):
        return self.x.sum(axis=0)


@dataclass(frozen=True)
class ChannelAggregates:
    """Per-channel MAC quantities at occupancy ``n`` and their ``n``-derivatives.

    ``k2`` is ``n * kappa2``; the game formulas only need ``kappa2``, which
    stays finite on an empty channel.
    """

    n: float
    gamma: float
    beta: float
    k0: float
    k1: float
    kappa2: float
    dk0: float
    dk1: float
    dkappa2: float

    @property
    def k2(self):
        return self.n * self.kappa2


@dataclass
class PayoffReport:
    F: np.ndarray
    excess: np.ndarray
    potential: float
    aggregates: list
    congestion: np.ndarray
    throughput_unit: np.ndarray
    service_time: np.ndarray


@dataclass(frozen=True)
class PopulationGame:
    """Static data of the game.

    ``weights`` holds the class count probabilities ``pi_c(n_c)`` and
    ``payload[c, j]`` the mean airtime ``sum_f P_f L_c / C_{f,c}^j`` in slots.
    ``prices`` is an optional per-class charge per unit mass.
    """

    channels: tuple
    frame_len: np.ndarray
    zeta: np.ndarray
    weights: np.ndarray
    region_probs: np.ndarray
    masses: np.ndarray
    available: np.ndarray
    phi: float = 1.0
    prices: np.ndarray | None = None
    payload: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        for name in ("frame_len", "zeta", "weights", "region_probs", "masses"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float))
        C, L = len(self.frame_len), len(self.channels)
        avail = np.ones((C, L), bool) if self.available is None else np.asarray(self.available, bool)
        if avail.shape != (C, L):
            raise ValueError(f"available mask must be {(C, L)}, got {avail.shape}")
        if not avail.any(axis=1).all():
            raise ValueError("every class needs at least one available channel")
        object.__setattr__(self, "available", avail)
        P = self.region_probs
        payload = np.empty((C, L))
        for j, ch in enumerate(self.channels):
            rates = np.broadcast_to(ch.rates, (C, len(P)))
            payload[:, j] = self.frame_len * (rates ** -1.0 @ P)
        object.__setattr__(self, "payload", payload)
        prices = np.zeros(C) if self.prices is None else np.asarray(self.prices, float)
        if prices.shape != (C,) or np.any(prices < 0):
            raise ValueError(f"prices must be {C} nonnegative values")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "_w_served", self.weights * self.frame_len)
        object.__setattr__(self, "_w_delay", self.weights * self.zeta)
        object.__setattr__(self, "_w_charge", self.weights * self.zeta * prices)
        object.__setattr__(self, "_mac_consts", [_compiled_constants(ch.mac) for ch in self.channels])

    @classmethod
    def build(cls, classes, d, masses, channels, region_probs, available=None, phi=1.0,
              prices=None):
        """Game from vehicle classes; ``pi_c`` is the count pmf at ``round(n_c)``."""
        classes = list(classes)
        weights = [count_pmf(c, d).at(n) for c, n in zip(classes, masses)]
        return cls(channels, [c.frame_len for c in classes], [c.zeta for c in classes],
                   weights, getattr(region_probs, "p", region_probs), masses, available, phi,
                   prices)

    def with_prices(self, prices):
        return dataclasses.replace(self, prices=prices)

    @property
    def shape(self):
        return self.available.shape

    def initial_state(self):
        return GameState.uniform(self.masses, self.available)


def _aggregate_values(p: mac.MacParameters, n: float, guess=None) -> tuple:
    n = max(float(n), 0.0)
    fp = mac.solve_fixed_point(p, n, method="newton", guess=guess)
    dgamma, dbeta = mac.fixed_point_sensitivity(p, fp)
    gamma, beta = fp.gamma, fp.beta
    M = p.M
    tc, to = p.collision_slots, p.T_o
    e = max(n - 1.0, 0.0)
    log1m = math.log1p(-beta)
    q = math.exp(e * log1m)
    s = beta * q
    if n > 1.0:
        ds = dbeta * (q - e * s / (1.0 - beta)) + s * log1m
    else:
        ds = dbeta
    inv_s = 1.0 / s
    k0 = p.sigma * inv_s + n * (to - tc) + (inv_s + 1.0 - 1.0 / beta) * tc
    dk0 = -(p.sigma + tc) * ds * inv_s * inv_s + (to - tc) + tc * dbeta / (beta * beta)
    keep = 1.0 - gamma ** M
    dkeep = -M * gamma ** (M - 1) * dgamma if gamma > 0 else 0.0
    k1 = keep * k0 * s
    dk1 = dkeep * k0 * s + keep * (dk0 * s + k0 * ds)
    kappa2 = keep * s
    dkappa2 = dkeep * s + keep * ds
    return n, gamma, beta, k0, k1, kappa2, dk0, dk1, dkappa2


def channel_aggregates(spec: ChannelSpec, n: float) -> ChannelAggregates:
    """Solve the channel fixed point at occupancy ``n`` and form ``k0, k1, kappa2``.

    ``k0 = sigma/s + n (T_o - T_c) + (1/s + 1 - 1/beta) T_c`` with
    ``s = beta (1 - beta)^(n-1)``, ``k1 = (1 - gamma^M) k0 s`` and
    ``kappa2 = (1 - gamma^M) s``.  Exponents clamp at zero below one
    station.  Derivatives in ``n`` come from the fixed-point sensitivity.
    """
    return ChannelAggregates(*_aggregate_values(spec.mac, n))


def _aggregate_table(game, x, guesses=None):
    """Rows ``n, gamma, beta, k0, k1, kappa2, dk0, dk1, dkappa2`` by channel.

    ``guesses`` are collision probabilities that seed the per-channel
    solves.  Saturated channels go through the compiled solver.
    """
    occ = x.sum(axis=0)
    L = len(occ)
    t = np.empty((9, L))
    for j in range(L):
        g = -1.0 if guesses is None else guesses[j]
        consts = game._mac_consts[j]
        if consts is None:
            t[:, j] = _aggregate_values(game.channels[j].mac, occ[j],
                                           None if guesses is None else g)
        else:
            _kernels.channel_row(*consts, occ[j], g, t[:, j])
    return t


def _evaluate(game, x, guesses=None):
    """Payoff matrix, potential and channel table at allocation ``x`` (the hot path)."""
    t = _aggregate_table(game, x, guesses)
    F, theta = _kernels.payoff_matrix(x, t, game.payload, game._w_served, game._w_delay,
                                      game._w_charge, game.phi, game.available)
    return F, theta, t


def _reference_aggregates(game, x):
    return [channel_aggregates(ch, n) for ch, n in zip(game.channels, x.sum(axis=0))]


def _aggregates(game, x):
    return [ChannelAggregates(*col) for col in _aggregate_table(game, x).T.tolist()]


def _channel_terms(game, x, aggs):
    k0 = np.array([a.k0 for a in aggs])
    k1 = np.array([a.k1 for a in aggs])
    kappa2 = np.array([a.kappa2 for a in aggs])
    airtime = (x * game.payload).sum(axis=0)
    denom = k0 + airtime
    return k0, k1, kappa2, airtime, denom


def per_unit_throughput(game: PopulationGame, state: GameState, aggs=None) -> np.ndarray:
    """``e[c, j] = L_c / (k0_j + sum_f P_f sum_i x_ij L_i / C_{f,i}^j)``."""
    aggs = _aggregates(game, state.x) if aggs is None else aggs
    *_, denom = _channel_terms(game, state.x, aggs)
    return game.frame_len[:, None] / denom[None, :]


def class_mass_throughput(game: PopulationGame, state: GameState, aggs=None) -> np.ndarray:
    """Throughput of the whole mass of class ``c`` on channel ``j``."""
    return state.x * per_unit_throughput(game, state, aggs)


def channel_service_time(game: PopulationGame, state: GameState, aggs=None) -> np.ndarray:
    """``T_j = k1_j + k2_j sum_f P_f sum_i (x_ij / n_j) L_i / C_{f,i}^j``.

    Written as ``k1 + kappa2 * airtime`` so an empty channel gives ``k1``.
    """
    aggs = _aggregates(game, state.x) if aggs is None else aggs
    _, k1, kappa2, airtime, _ = _channel_terms(game, state.x, aggs)
    return k1 + kappa2 * airtime


def potential(game: PopulationGame, state: GameState, aggs=None) -> float:
    """Weighted class throughput minus weighted service time and charges, times ``phi``.

    ``Theta = phi (sum_ij pi_i x_ij e_ij - sum_ij zeta_i pi_i x_ij T_j
    - sum_ij zeta_i pi_i x_ij p_i)`` where ``p`` is the per-class price
    (zero unless set).
    """
    x = state.x
    aggs = _reference_aggregates(game, x) if aggs is None else aggs
    _, k1, kappa2, airtime, denom = _channel_terms(game, x, aggs)
    served = game._w_served @ x / denom
    delay = (game._w_delay @ x) * (k1 + kappa2 * airtime)
    charge = game._w_charge @ x.sum(axis=1)
    return float(game.phi * (np.sum(served - delay) - charge))


def payoff(game: PopulationGame, state: GameState) -> PayoffReport:
    """Per-unit-mass payoffs, the gradient of :func:`potential`.

    ``F[c, l] = phi (pi_c e_cl - occ_cl sum_i pi_i theta_il
    - kappa2_l a_cl sum_i zeta_i pi_i x_il - zeta_c pi_c (T_l + p_c)) + cong_l``
    where ``occ_cl = a_cl / D_l`` is the occupancy factor, ``D_l`` the
    denominator of ``e_cl`` and ``cong_l`` the derivative of ``k0, k1,
    kappa2`` through the occupancy ``n_l``.  Unavailable channels get
    ``-inf``.
    """
    x = state.x
    F, theta, t = _evaluate(game, x)
    aggs = [ChannelAggregates(*col) for col in t.T.tolist()]
    k0, k1, kappa2, airtime, denom = _channel_terms(game, x, aggs)
    served = game._w_served @ x / denom
    delay_mass = game._w_delay @ x
    congestion = -game.phi * (t[6] * served / denom + (t[7] + t[8] * airtime) * delay_mass)
    return PayoffReport(F, excess_payoff(x, state.masses, F), theta, aggs, congestion,
                        game.frame_len[:, None] / denom[None, :], k1 + kappa2 * airtime)


def _class_average(x, masses, F):
    # unavailable channels carry zero mass
    return (x * np.where(np.isfinite(F), F, 0.0)).sum(axis=1) / masses


def excess_payoff(x, masses, F) -> np.ndarray:
    """``k[c, l] = max(F[c, l] - mass-weighted class average, 0)``."""
    return np.maximum(F - _class_average(x, masses, F)[:, None], 0.0)


def bnn_velocity(x, masses, excess) -> np.ndarray:
    """BNN vector field ``n_c k_cl - x_cl sum_j k_cj``."""
    return masses[:, None] * excess - x * excess.sum(axis=1, keepdims=True)


def bnn_step(game: PopulationGame, state: GameState, h: float, scale: float = 1.0,
             k1=None, guesses=None) -> GameState:
    """One classical RK4 step of the BNN dynamics (time rescaled by ``1/scale``).

    The result is clipped at zero and renormalized to the class masses.
    ``k1`` may carry the vector field at ``state`` when already known and
    ``guesses`` the channel collision probabilities there.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    masses = state.masses

    def field_at(x):
        xs = np.maximum(x, 0.0)
        F, _, _ = _evaluate(game, xs, guesses)
        return _kernels.velocity(xs, masses, _kernels.excess(xs, masses, F), scale)

    x = state.x
    k1 = field_at(x) if k1 is None else k1
    k2 = field_at(x + 0.5 * h * k1)
    k3 = field_at(x + 0.5 * h * k2)
    k4 = field_at(x + h * k3)
    new = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return state.copy(_renormalize(new, masses, state.available))


def _renormalize(x, masses, available):
    x = np.where(available, np.maximum(x, 0.0), 0.0)
    return x * (masses / x.sum(axis=1))[:, None]


@dataclass
class BnnResult:
    state: GameState
    converged: bool
    steps: int
    theta: np.ndarray
    max_excess: np.ndarray
    pc: np.ndarray
    mass_drift: float
    trajectory: list = field(default_factory=list)

    def to_rows(self):
        """Rows ``(step, theta, max_excess, x...)`` for the recorded states."""
        return [(s, th, me, *x.ravel()) for s, th, me, x in self.trajectory]


def payoff_scale(game: PopulationGame) -> float:
    """Largest payoff magnitude at the uniform allocation; the BNN time unit."""
    F, _, _ = _evaluate(game, game.initial_state().x)
    return max(float(np.abs(F[np.isfinite(F)]).max()), 1e-300)


def run_bnn(game: PopulationGame, initial: GameState | None = None, h: float = 0.01,
            max_steps: int = 1_000_000, eps: float = 1e-6, record_every: int = 0,
            slack: float = 1e-9, stationary_tol: float = 1e-12,
            scale: float | None = None) -> BnnResult:
    """Integrate BNN dynamics until the largest excess payoff is below ``eps``.

    Time is measured in units of :func:`payoff_scale` unless ``scale`` is
    given, so that ``h`` is dimensionless.  The potential is checked
    to be nondecreasing (within ``slack``) at every step and ``V . F`` is
    recorded wherever the state is not stationary.
    """
    state = game.initial_state() if initial is None else initial.copy()
    state.check()
    masses = state.masses
    F, theta, table = _evaluate(game, state.x)
    if scale is None:
        scale = payoff_scale(game)
    k = _kernels.excess(state.x, masses, F)
    thetas, excesses, pcs, traj = [theta], [k.max()], [], []
    if record_every:
        traj.append((0, theta, k.max(), state.x.copy()))
    drift = 0.0
    steps = 0
    while k.max() >= eps and steps < max_steps:
        V = _kernels.velocity(state.x, masses, k, 1.0)
        if k.max() > stationary_tol * scale:
            pcs.append(_correlation(state.x, masses, F, V))
        state = bnn_step(game, state, h, scale, V / scale, table[1])
        steps += 1
        drift = max(drift, float(np.abs(state.x.sum(axis=1) - masses).max()))
        F, new_theta, table = _evaluate(game, state.x, table[1])
        if new_theta < theta - slack:
            raise IntegrationError(
                f"potential decreased by {theta - new_theta:.3e} at step {steps}; "
                f"reduce h (currently {h})")
        theta = new_theta
        k = _kernels.excess(state.x, masses, F)
        thetas.append(theta)
        excesses.append(k.max())
        if record_every and steps % record_every == 0:
            traj.append((steps, theta, k.max(), state.x.copy()))
    if record_every and traj[-1][0] != steps:
        traj.append((steps, theta, k.max(), state.x.copy()))
    return BnnResult(state, bool(k.max() < eps), steps, np.array(thetas),
                     np.array(excesses), np.array(pcs), drift, traj)


def _correlation(x, masses, F, V):
    avg = _class_average(x, masses, F)
    centred = np.where(np.isfinite(F), F - avg[:, None], 0.0)
    # rows of V sum to zero, so centring F per class leaves V.F unchanged
    return float(np.sum(V * centred))


def positive_correlation(x, masses, F) -> float:
    """``V . F`` over available channels; positive off equilibrium."""
    V = bnn_velocity(x, masses, excess_payoff(x, masses, F))
    return _correlation(x, masses, F, V)


def is_wardrop(state: GameState, report: PayoffReport, eps: float = 1e-5,
               eps_mass: float = 1e-6):
    """Check that every used channel earns its class's best payoff within ``eps``.

    Returns ``(ok, violations)`` with one ``(class, channel, gap)`` entry
    per used channel whose payoff falls short.
    """
    violations = []
    for c in range(state.x.shape[0]):
        best = report.F[c][state.available[c]].max()
        for l in np.flatnonzero(state.available[c]):
            if state.x[c, l] > eps_mass and best - report.F[c, l] > eps:
                violations.append((c, int(l), float(best - report.F[c, l])))
    return not violations, violations


def project_scaled_simplex(v, total, mask=None):
    """Euclidean projection of ``v`` onto ``{y >= 0, sum y = total}`` restricted to ``mask``."""
    v = np.asarray(v, float)
    mask = np.ones_like(v, bool) if mask is None else np.asarray(mask, bool)
    out = np.zeros_like(v)
    w = v[mask]
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - total
    idx = np.arange(1, len(u) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    out[mask] = np.maximum(w - tau, 0.0)
    return out


def _project(x, masses, available):
    return np.stack([project_scaled_simplex(x[c], masses[c], available[c])
                     for c in range(len(masses))])


@dataclass
class OptimizationResult:
    x: np.ndarray
    theta: float
    starts: list
    iterations: int


def optimize_potential(game: PopulationGame, starts: int = 16, seed=0, tol: float = 1e-13,
                       max_iter: int = 20_000, initial=()) -> OptimizationResult:
    """Maximize the potential by projected-gradient ascent from several starts.

    Each start is a random feasible state (plus any given in ``initial``);
    steps use Armijo backtracking along the projection arc.  Ties in the
    best potential (within 1e-9 relative) resolve to the lexicographically
    smallest allocation.
    """
    rng = np.random.default_rng(seed)
    masses, avail = game.masses, game.available
    inits = [np.asarray(s.x if isinstance(s, GameState) else s, float) for s in initial]
    inits += [GameState.random(masses, avail, rng).x for _ in range(starts)]
    results = []
    total_iter = 0
    for x0 in inits:
        x = _project(x0, masses, avail)
        F, theta, table = _evaluate(game, x)
        step = 1.0 / max(float(np.abs(F[avail]).max()), 1e-12)
        for _ in range(max_iter):
            grad = np.where(avail, F, 0.0)
            while True:
                cand = _project(x + step * grad, masses, avail)
                move = cand - x
                F_c, theta_c, table_c = _evaluate(game, cand, table[1])
                if theta_c >= theta + 1e-4 * np.sum(grad * move) or step < 1e-14:
                    break
                step *= 0.5
            total_iter += 1
            done = np.abs(move).max() < tol * max(1.0, masses.max())
            if theta_c >= theta:
                x, F, theta, table = cand, F_c, theta_c, table_c
            else:
                done = True
            if done:
                break
            step *= 2.0
        results.append((theta, x))
    best = max(t for t, _ in results)
    ties = [x for t, x in results if t >= best - 1e-9 * max(1.0, abs(best))]
    x_best = min(ties, key=lambda arr: tuple(np.round(arr.ravel(), 9)))
    theta_best = _evaluate(game, x_best)[1]
    return OptimizationResult(x_best, theta_best, results, total_iter)
