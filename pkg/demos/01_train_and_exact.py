"""
Training a small RBM and computing its partition function exactly
================================================================

Bars-and-stripes images are small enough that both the data likelihood
and log Z can be computed by brute force, which makes them a good test bed
for sampling-based estimators.
"""
import numpy as np

from varopt_ais.model import log_pstar
from varopt_ais.oracle import exact_log_z
from varopt_ais.trainer import TrainConfig, bars_and_stripes, mean_log_likelihood, train

# 3x4 images whose rows (or columns) are all on or all off: 22 patterns.
data = bars_and_stripes(3, 4)
print(f"{len(data)} patterns of {data.n_visible} pixels")

# Persistent CD with full-batch updates and 200 persistent chains.
config = TrainConfig("PCD", gibbs_steps=1, learning_rate=0.1, epochs=1500,
                     batch_size=len(data), seed=0, n_chains=200)
history = []
params = train(data, 10, config,
               callback=lambda e, p: history.append(mean_log_likelihood(p, data))
               if (e + 1) % 300 == 0 else None)
for epoch, ll in zip(range(300, 1501, 300), history):
    print(f"epoch {epoch:5d}  mean log-likelihood {ll:8.4f}")
print(f"a perfect model would reach log(1/22) = {np.log(1 / 22):.4f}")

# log Z is summed over whichever layer is smaller; both routes agree.
by_hidden = exact_log_z(params, method="enumerate_hidden")
by_visible = exact_log_z(params, method="enumerate_visible")
print(f"log Z = {by_hidden.log_z:.10f} (hidden sum), {by_visible.log_z:.10f} (visible sum)")

# The most probable images are the training patterns.
states = np.array([[int(c) for c in np.binary_repr(i, 12)] for i in range(2 ** 12)], float)
top = np.argsort(log_pstar(states, params))[::-1][:5]
for i in top:
    print(states[i].astype(int).reshape(3, 4), "\n")
