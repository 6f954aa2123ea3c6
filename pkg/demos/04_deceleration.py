"""
Capping the step size
=====================

The optimal schedule can take large steps where g is small.  Real Gibbs
chains mix slowly, so large jumps hurt; deceleration caps every step and
stretches the rest to keep the schedule on [0, 1].
"""
import numpy as np

from varopt_ais.ais import Schedule
from varopt_ais.schedule import GTable, de_solve, decelerate, functional_j

s = decelerate(Schedule([0.0, 0.6, 0.8, 1.0]), 0.5, tol=1e-9)
print("steps [0.6, 0.2, 0.2] capped at 0.5 ->", np.round(s.deltas, 6))

# A profile with a sharp bump: the optimum sprints across the flat parts.
g = lambda b: 1e-4 + np.exp(-((b - 0.7) / 0.03) ** 2)
opt = de_solve(GTable.from_function(g, 2000), 200)
print(f"largest optimal step: {opt.deltas.max() * 200:.2f}/K")
for cap in (5.0, 3.0, 2.0, 1.5):
    dec = decelerate(opt, cap / 200)
    print(f"cap {cap:3.1f}/K  largest step {dec.deltas.max() * 200:.2f}/K  "
          f"J = {functional_j(dec, g):.4f}")
