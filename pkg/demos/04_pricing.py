"""
Pricing channel access
======================

The RSU charges each class a per-unit price.  The charge enters every
payoff of a class as the same constant, so it never changes which channel
is best; the equilibrium stays where it was and the RSU gain grows
linearly in the prices.  The grid search shows this directly.
"""

import numpy as np

from v2rgame import game as gm
from v2rgame import pricing, scenario

scn = scenario.load(scenario.bundled("reference"))
game = scn.game()

grid = pricing.price_grid([np.linspace(0, 1, 3), np.linspace(0, 1, 3)])
res = pricing.solve_pricing(game, grid, h=0.05)
print(" p_0   p_1   potential   RSU gain")
for p0, p1, theta, psi, ok in res.to_rows():
    print(f"{p0:4.1f}  {p1:4.1f}   {theta:9.4f}   {psi:8.4f}")
print(f"best prices {res.p_star}, gain {res.psi_star:.4f}")

# the equilibrium allocation does not move with the prices
base = gm.run_bnn(game, h=0.05).state.x
priced = gm.run_bnn(game.with_prices(res.p_star), h=0.05).state.x
print(f"largest allocation change under p*: {np.abs(base - priced).max():.2e}")
