"""RSU pricing on top of the channel-selection game.

The RSU charges class ``c`` a price ``p_c`` per unit of weighted mass.
Users see the charge as a payoff deduction ``phi zeta_c pi_c p_c`` and
the RSU collects ``Psi = phi sum_ij zeta_i pi_i x_ij p_i``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import game as g


@dataclass(frozen=True)
class PriceVector:
    p: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, float))
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError(f"prices must be finite and nonnegative, got {p}")
        object.__setattr__(self, "p", p)


def _p(prices):
    return prices.p if isinstance(prices, PriceVector) else PriceVector(prices).p


def priced_potential(game: g.PopulationGame, state: g.GameState, prices) -> float:
    """Game potential minus ``phi sum_ij zeta_i pi_i x_ij p_i``."""
    return g.potential(game.with_prices(_p(prices)), state)


def priced_payoff(game: g.PopulationGame, state: g.GameState, prices) -> g.PayoffReport:
    """Payoffs with the per-class charge ``phi zeta_c pi_c p_c`` deducted."""
    return g.payoff(game.with_prices(_p(prices)), state)


def rsu_gain(game: g.PopulationGame, state: g.GameState, prices) -> float:
    p = _p(prices)
    return float(game.phi * np.sum(game.zeta * game.weights * state.x.sum(axis=1) * p))


@dataclass
class PricingResult:
    p_star: np.ndarray
    state: g.GameState
    psi_star: float
    rows: list = field(default_factory=list)

    def to_rows(self):
        """``(p..., theta, psi, converged)`` per grid point in grid order."""
        return [(*p, theta, psi, ok) for p, theta, psi, ok, _ in self.rows]


def price_grid(per_class):
    """Cartesian product of per-class price lists, in lexicographic order."""
    axes = [sorted(set(float(v) for v in np.atleast_1d(a))) for a in per_class]
    return [np.array(p) for p in itertools.product(*axes)]


def solve_pricing(game: g.PopulationGame, grid, seed=None, h: float = 0.01,
                  eps: float = 1e-6, max_steps: int = 1_000_000) -> PricingResult:
    """Grid search for the gain-maximizing price vector.

    ``grid`` is a list of per-class price vectors (see :func:`price_grid`).
    Each point runs the BNN dynamics under the priced payoffs from the
    same start (uniform, or random from ``seed``) and evaluates the gain
    at the resulting state.  Points whose dynamics do not converge are
    skipped with a warning.  Ties go to the lexicographically smallest
    price vector.
    """
    grid = [_p(p) for p in grid]
    if not grid:
        raise ValueError("empty price grid")
    start = game.initial_state()
    if seed is not None:
        start = g.GameState.random(game.masses, game.available, np.random.default_rng(seed))
    rows = []
    for p in grid:
        priced = game.with_prices(p)
        res = g.run_bnn(priced, start, h=h, eps=eps, max_steps=max_steps,
                        scale=g.payoff_scale(game))
        psi = rsu_gain(game, res.state, p)
        rows.append((tuple(p), res.theta[-1], psi, res.converged, res.state))
        if not res.converged:
            warnings.warn(f"BNN did not converge at prices {p}; excluded", stacklevel=2)
    ok = [r for r in rows if r[3]]
    if not ok:
        raise ArithmeticError("BNN did not converge at any grid point")
    best = max(r[2] for r in ok)
    winner = min((r for r in ok if r[2] >= best - 1e-12 * max(1.0, abs(best))),
                 key=lambda r: r[0])
    return PricingResult(np.array(winner[0]), winner[4], winner[2], rows)
