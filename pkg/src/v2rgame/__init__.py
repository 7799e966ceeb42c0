"""Channel selection for vehicle-to-roadside uplinks as a population game.

Submodules
----------
traffic    vehicle-count distributions on the coverage segment
linkstate  distance regions, rates and frame-time transforms
mac        DCF fixed point, throughput and service-time transforms
game       potential game, BNN dynamics and direct potential maximization
pricing    RSU price search over the game equilibrium
sim        slotted DCF discrete-event simulator
scenario   JSON scenario schema used by the ``v2rgame`` command
"""

__version__ = "0.1.0"
