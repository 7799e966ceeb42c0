"""
Vehicles choosing channels
==========================

Two vehicle classes split their mass over the channels they can use.  The
payoff of a channel is the gradient of a potential, so BNN dynamics climb
the potential and stop at a Wardrop equilibrium, where no class can gain
by moving mass.  A projected-gradient optimizer gives an independent
answer.
"""

import numpy as np

from v2rgame import game as gm
from v2rgame import scenario

np.set_printoptions(precision=3, suppress=True)

scn = scenario.load(scenario.bundled("reference"))
game = scn.game()
print("available channels per class:\n", game.available.astype(int))

res = gm.run_bnn(game, h=0.05, record_every=500)
for step, theta, excess, _ in res.trajectory[:: max(1, len(res.trajectory) // 6)]:
    print(f"step {step:6d}  potential {theta:.6f}  max excess {excess:.2e}")
print(f"converged={res.converged} after {res.steps} steps")
print("equilibrium allocation:\n", res.state.x)

report = gm.payoff(game, res.state)
print("payoffs at equilibrium (used channels tie within a class):\n", report.F)
print("Wardrop:", gm.is_wardrop(res.state, report)[0])

opt = gm.optimize_potential(game, starts=8, seed=0)
print(f"\noptimizer potential {opt.theta:.10f} vs BNN {res.theta[-1]:.10f}")

# A larger setting with three radio technologies.  Here the potential is not
# concave: BNN from the uniform start settles on one local maximum, while
# multi-start search also finds a segregated allocation with a higher value.
big = scenario.load(scenario.bundled("paper_table2"))
g2 = big.game()
b = big.data["game"]["bnn"]
r2 = gm.run_bnn(g2, h=b["h"], max_steps=int(b["max_steps"]))
o2 = gm.optimize_potential(g2, starts=8, seed=0)
print(f"\nthree-technology road: BNN potential {r2.theta[-1]:.4f} "
      f"(converged={r2.converged}), best start {o2.theta:.4f}")
print("BNN allocation:\n", r2.state.x)
print("best allocation found:\n", o2.x)
