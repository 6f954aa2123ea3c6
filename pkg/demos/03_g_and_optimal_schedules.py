"""
The difficulty profile g(beta) and the optimal schedule
========================================================

Under perfect transitions K * Var[log w] approaches the integral of
beta'(t)^2 g(beta(t)).  The schedule minimizing it keeps beta'^2 g constant,
spending more steps where g is large.
"""
import numpy as np

from varopt_ais.model import GeometricPath
from varopt_ais.oracle import exact_g
from varopt_ais.schedule import (GTable, de_solve, dlog_g, estimate_g_table, functional_j,
                                 linear_schedule, quadrature_schedule, smooth,
                                 var_log_w_perfect)
from varopt_ais.trainer import desk_model

# A closed-form case first: g = exp(2 beta) gives beta(t) = log(1 + (e - 1) t).
table = GTable.from_function(lambda b: np.exp(2 * b), 1000)
s = de_solve(table, 1000)
t = np.linspace(0, 1, 1001)
print("max error vs closed form:", np.abs(s.betas - np.log1p((np.e - 1) * t)).max())
print("ODE solver vs first-integral quadrature:",
      np.abs(s.betas - quadrature_schedule(table, 1000).betas).max())
g = lambda b: np.exp(2 * b)
print(f"J(linear) = {functional_j(linear_schedule(10_000), g):.4f}, "
      f"J(optimal) = {functional_j(de_solve(table, 10_000), g):.4f}")

# A trained model: estimate g from one cheap AIS pass and compare with exact g.
path = GeometricPath.from_target(desk_model(n_visible=8, n_hidden=6, epochs=1500))
raw = estimate_g_table(path, 200, 2000, seed=0)
est = dlog_g(smooth(raw, 2))
exact = exact_g(path, est.grid)
for i in range(0, 201, 25):
    print(f"beta = {est.grid[i]:.3f}  g_hat = {raw.g_raw[i]:7.3f}  "
          f"smoothed = {est.g[i]:7.3f}  exact = {exact[i]:7.3f}")

# The solved schedule lowers the perfect-transition variance.
k = 500
for name, sched in [("linear", linear_schedule(k)), ("optimal", de_solve(est, k))]:
    print(f"{name:8s} J = {functional_j(sched, lambda b: exact_g(path, b)):.4f}  "
          f"K Var[log w] = {k * var_log_w_perfect(path, sched):.4f}")
