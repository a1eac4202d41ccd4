# Cross-checking the decentralised solver against the two reference solvers
# on a problem small enough to enumerate.

import numpy as np

from evattack.engine import SolverConfig, ValleyProblem, objective, run
from evattack.oracle import grid_brute_force, solve_reference

# one EV, two steps, baseline (4, 2) kW, one full-power step to deliver
prob = ValleyProblem(baseline=np.array([4.0, 2.0]), p_max=np.array([6.6]),
                     targets=np.array([1.0]), sensitivity=np.zeros((1, 1)),
                     y_d=np.ones((1, 2)), voltage_floor=0.0)

ref = solve_reference(prob)
grid = grid_brute_force(prob, resolution=1e-3)
spds = run(prob, SolverConfig(alpha=0.01, beta=1.0, k_max=10_000, eps=1e-12))

print("closed form     ", np.array([4.6, 8.6]) / 13.2)
print("reference       ", ref.profiles[0], f"after {ref.iterations} iterations")
print("grid (1e-3)     ", grid.profiles[0])
print("decentralised   ", spds.profiles[0], f"after {spds.iterations} iterations")
print("objectives:", ref.objective, grid.objective,
      objective(spds.profiles, prob.baseline, prob.p_max))
