"""
VAROPT-AIS against the linear schedule
======================================

The full pipeline: survey g with a cheap linear pass on an independent
seed, solve for the schedule, cap its steps, then run the main AIS pass.
This is what ``varopt-ais varopt`` and ``varopt-ais compare`` do.
"""
import numpy as np

from varopt_ais.ais import run_ais
from varopt_ais.cli import _sub_seeds, varopt_schedule
from varopt_ais.model import GeometricPath
from varopt_ais.oracle import exact_log_z
from varopt_ais.schedule import linear_schedule
from varopt_ais.trainer import desk_model

path = GeometricPath.from_target(desk_model())
truth = exact_log_z(path.target).log_z
k, n = 1000, 300
g_seed, _ = _sub_seeds(0)
timings = {}
schedule, table = varopt_schedule(path, k, 500, 300, g_seed, dbmax=3.0 / k, timings=timings)
print("stage times:", {name: round(t, 3) for name, t in timings.items()})
print(f"g ranges from {table.g.min():.2f} to {table.g.max():.2f}")

for name, sched in [("linear", linear_schedule(k)), ("varopt", schedule)]:
    res = [run_ais(path, sched, n, seed=s) for s in range(5)]
    err = np.mean([abs(r.log_z_hat - truth) for r in res])
    print(f"{name:7s} median ESS {np.median([r.ess for r in res]):6.1f}  "
          f"mean var log w {np.mean([r.log_weight_std ** 2 for r in res]):.2e}  "
          f"mean |log Z error| {err:.2e}")
