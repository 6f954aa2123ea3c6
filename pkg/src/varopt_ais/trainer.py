"""Contrastive-divergence training of small binary RBMs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

from .model import RbmParams


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float, ndmin=2)
        if rows.size == 0 or rows.shape[0] == 0:
            raise ValueError("dataset is empty")
        if not np.all((rows == 0.0) | (rows == 1.0)):
            raise ValueError("dataset entries must be 0 or 1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n_visible(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]

    @classmethod
    def from_csv(cls, path) -> "BinaryDataset":
        rows = np.loadtxt(Path(path), delimiter=",", ndmin=2)
        return cls(rows)

    def to_csv(self, path):
        np.savetxt(Path(path), self.rows, fmt="%d", delimiter=",")


def bars_and_stripes(height: int, width: int) -> BinaryDataset:
    """All height x width images whose rows (or columns) are each all-on or all-off.

    Flattened row-major; duplicates (all-off, all-on) appear once.
    """
    patterns = set()
    for rows_on in itertools.product((0, 1), repeat=height):
        patterns.add(tuple(np.repeat(rows_on, width)))
    for cols_on in itertools.product((0, 1), repeat=width):
        patterns.add(tuple(np.tile(cols_on, height)))
    return BinaryDataset(np.array(sorted(patterns), dtype=float))


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "PCD"        # "CD" or "PCD"
    gibbs_steps: int = 1
    learning_rate: float = 0.05
    epochs: int = 100
    batch_size: int = 16
    l2: float = 0.0
    seed: int = 0
    init_std: float = 0.01
    n_chains: Optional[int] = None  # persistent chains; defaults to batch_size

    def __post_init__(self):
        if self.algorithm not in ("CD", "PCD"):
            raise ValueError("algorithm must be 'CD' or 'PCD'")
        if self.gibbs_steps < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("gibbs_steps, epochs and batch_size must be >= 1")
        if self.learning_rate < 0 or self.l2 < 0:
            raise ValueError("learning_rate and l2 must be non-negative")


def initial_params(n_visible: int, n_hidden: int, rng: np.random.Generator,
                   init_std: float = 0.01) -> RbmParams:
    return RbmParams(rng.normal(0.0, init_std, size=(n_hidden, n_visible)),
                     np.zeros(n_hidden), np.zeros(n_visible))


def gibbs_chain(v, params: RbmParams, steps: int, rng: np.random.Generator):
    """Run ``steps`` full sweeps v -> h -> v on the plain RBM."""
    for _ in range(steps):
        ph = expit(v @ params.weights.T + params.hidden_bias)
        h = (rng.random(ph.shape) < ph).astype(float)
        pv = expit(h @ params.weights + params.visible_bias)
        v = (rng.random(pv.shape) < pv).astype(float)
    return v


def gradient_step(params: RbmParams, batch, negatives, learning_rate: float,
                  l2: float = 0.0) -> RbmParams:
    """One stochastic gradient ascent step on the log-likelihood.

    Both phases use hidden probabilities rather than samples.  L2 decay
    acts on the weights only.
    """
    batch = np.asarray(batch, dtype=float)
    negatives = np.asarray(negatives, dtype=float)
    ph_pos = expit(batch @ params.weights.T + params.hidden_bias)
    ph_neg = expit(negatives @ params.weights.T + params.hidden_bias)
    grad_w = ph_pos.T @ batch / len(batch) - ph_neg.T @ negatives / len(negatives)
    grad_a = ph_pos.mean(axis=0) - ph_neg.mean(axis=0)
    grad_b = batch.mean(axis=0) - negatives.mean(axis=0)
    return RbmParams(
        params.weights + learning_rate * (grad_w - l2 * params.weights),
        params.hidden_bias + learning_rate * grad_a,
        params.visible_bias + learning_rate * grad_b,
    )


def train(data: BinaryDataset, m_hidden: int, config: TrainConfig,
          rng: Optional[np.random.Generator] = None,
          init: Optional[RbmParams] = None, callback=None) -> RbmParams:
    """Train an RBM with CD-k or persistent CD.

    ``rng`` defaults to a generator seeded with ``config.seed``.  ``callback``
    is called as ``callback(epoch, params)`` after every epoch.
    """
    if m_hidden < 1:
        raise ValueError("m_hidden must be >= 1")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    params = init if init is not None else initial_params(
        data.n_visible, m_hidden, rng, config.init_std)
    rows = data.rows
    bs = min(config.batch_size, len(rows))
    n_chains = config.n_chains or bs
    chains = rows[rng.integers(0, len(rows), size=n_chains)].copy()
    for epoch in range(config.epochs):
        order = rng.permutation(len(rows))
        for start in range(0, len(rows), bs):
            batch = rows[order[start:start + bs]]
            if config.algorithm == "PCD":
                chains = gibbs_chain(chains, params, config.gibbs_steps, rng)
                negatives = chains
            else:
                negatives = gibbs_chain(batch, params, config.gibbs_steps, rng)
            try:
                params = gradient_step(params, batch, negatives,
                                       config.learning_rate, config.l2)
            except ValueError as exc:
                raise TrainingDivergedError(f"training diverged in epoch {epoch}") from exc
        if callback is not None:
            callback(epoch, params)
    return params


def mean_log_likelihood(params: RbmParams, data: BinaryDataset) -> float:
    """Average exact data log-likelihood (small models only)."""
    from .model import log_pstar
    from .oracle import exact_log_z

    return float(np.mean(log_pstar(data.rows, params)) - exact_log_z(params).log_z)


def desk_model(n_visible: int = 12, n_hidden: int = 10, epochs: int = 3000,
               seed: int = 0, algorithm: str = "PCD") -> RbmParams:
    """PCD-trained RBM on bars-and-stripes, used by demos and acceptance tests.

    Supported visible sizes: any product height * width with height in
    {2, 3, 4}; picks the first of 3, 2, 4 that divides ``n_visible``.
    Full-batch updates with 200 persistent chains; the 12-visible default
    reaches a mean log-likelihood near -3.75 (the optimum is log(1/22)).
    """
    shape = next(((h, n_visible // h) for h in (3, 2, 4)
                  if n_visible % h == 0 and n_visible // h >= 2), None)
    if shape is None:
        raise ValueError(f"no bars-and-stripes layout for {n_visible} visible units")
    data = bars_and_stripes(*shape)
    config = TrainConfig(algorithm=algorithm, gibbs_steps=1, learning_rate=0.1,
                         epochs=epochs, batch_size=len(data), seed=seed,
                         n_chains=200)
    return train(data, n_hidden, config)
