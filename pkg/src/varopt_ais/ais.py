"""Annealed importance sampling over a geometric RBM path.

Each of the N chains draws its randomness from its own stream, derived from
``(seed, chain index)`` alone, so results do not depend on how the chains are
batched.  Chains are advanced together as a vectorized batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .model import (GeometricPath, gibbs_sweep_from_uniforms,
                    log_pstar_beta_from_terms, path_terms,
                    sample_base_from_uniforms)


class DegenerateWeightsError(FloatingPointError):
    """Raised when every importance weight is zero (log weight -inf or NaN)."""


@dataclass(frozen=True, eq=False)
class Schedule:
    """Monotone annealing schedule 0 = beta_0 <= ... <= beta_K = 1."""

    betas: np.ndarray

    def __post_init__(self):
        b = np.array(self.betas, dtype=float).ravel()
        if b.size < 2:
            raise ValueError("a schedule needs at least two points")
        if not np.all(np.isfinite(b)):
            raise ValueError("schedule contains non-finite values")
        if abs(b[0]) > 1e-12 or abs(b[-1] - 1.0) > 1e-12:
            raise ValueError(f"schedule must run from 0 to 1, got [{b[0]}, {b[-1]}]")
        if np.any(np.diff(b) < 0.0):
            raise ValueError("schedule must be non-decreasing")
        b[0], b[-1] = 0.0, 1.0
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)

    @property
    def k(self) -> int:
        return self.betas.size - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.betas)

    def __len__(self):
        return self.betas.size


@dataclass(eq=False)
class AisResult:
    log_weights: np.ndarray
    log_z_hat: float
    ess: float
    log_weight_std: float
    log_z_base: float
    schedule: Schedule
    # Per annealing step k = 1..K: beta_k, ESS of the on-the-fly weights and
    # observer estimates (shape (K, n_observers)).  Empty unless requested.
    trace_betas: np.ndarray = field(default_factory=lambda: np.empty(0))
    trace_ess: np.ndarray = field(default_factory=lambda: np.empty(0))
    trace_f: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    @property
    def n_runs(self) -> int:
        return self.log_weights.size

    @property
    def on_the_fly(self) -> list:
        """Per-step records ``{"beta", "ess", "f"}`` (empty if not traced)."""
        rows = []
        for i, beta in enumerate(self.trace_betas):
            row = {"beta": float(beta)}
            if self.trace_ess.size:
                row["ess"] = float(self.trace_ess[i])
            if self.trace_f.size:
                row["f"] = self.trace_f[i].tolist()
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "log_z_hat": self.log_z_hat,
            "ess": self.ess,
            "n_runs": self.n_runs,
            "k": self.schedule.k,
            "log_weight_std": self.log_weight_std,
            "on_the_fly": self.on_the_fly,
        }


def _finite_log_weights(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    if lw.ndim != 1 or lw.size < 2:
        raise ValueError("need a 1-d vector of at least two log weights")
    if np.any(np.isnan(lw)) or not np.any(np.isfinite(lw)):
        raise DegenerateWeightsError("all importance weights vanish")
    if np.any(lw == np.inf):
        raise DegenerateWeightsError("infinite importance weight")
    return lw


def normalized_weights(log_weights) -> np.ndarray:
    """Weights rescaled to sum to one, computed in the log domain."""
    lw = _finite_log_weights(log_weights)
    return np.exp(lw - logsumexp(lw))


def ess(log_weights) -> float:
    """Effective sample size N / (1 + s^2) of the weights w_* = N w / sum(w).

    s^2 is the unbiased (N - 1 denominator) sample variance.
    """
    lw = _finite_log_weights(log_weights)
    n = lw.size
    w_star = n * np.exp(lw - logsumexp(lw))
    return float(n / (1.0 + np.var(w_star, ddof=1)))


def on_the_fly_expectation(log_weights, f_values) -> float:
    """Self-normalized importance estimate of E[f]."""
    f = np.asarray(f_values, dtype=float)
    if f.shape != np.shape(log_weights):
        raise ValueError("log_weights and f_values must have equal length")
    return float(normalized_weights(log_weights) @ f)


def log_weight_std(log_weights) -> float:
    """Unbiased sample standard deviation of the log weights."""
    lw = np.asarray(log_weights, dtype=float)
    if lw.size < 2:
        raise ValueError("need at least two log weights")
    return float(np.std(lw, ddof=1))


def log_mean_exp(log_weights) -> float:
    lw = _finite_log_weights(log_weights)
    return float(logsumexp(lw) - np.log(lw.size))


def chain_streams(seed, n_chains: int) -> list:
    """One independent generator per chain, keyed by (seed, chain index)."""
    if isinstance(seed, np.random.SeedSequence):
        entropy, key = seed.entropy, tuple(seed.spawn_key)
    else:
        entropy, key = int(seed), ()
    return [np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy, spawn_key=key + (i,))))
        for i in range(n_chains)]


class _UniformBlocks:
    """Hands out per-step uniforms, drawn in blocks from per-chain streams."""

    def __init__(self, streams, width: int, max_floats: int = 1 << 22):
        self.streams = streams
        self.width = width
        self.block = max(1, max_floats // max(1, len(streams) * width))
        self._buf = None
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._buf is None or self._pos == self._buf.shape[0]:
            self._buf = np.stack(
                [g.random((self.block, self.width)) for g in self.streams], axis=1)
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out


def anneal(path: GeometricPath, schedule: Schedule, n_runs: int,
           seed) -> Iterator[tuple]:
    """Run the annealing loop, yielding after every weight update.

    Yields ``(k, beta_k, v, log_w)`` for k = 0..K.  At k = 0, ``v`` holds the
    exact base samples and ``log_w`` is zero.  For k >= 1, ``v`` holds the
    states v_{k-1} and ``log_w`` already includes the ratio
    p*_{beta_k}(v_{k-1}) / p*_{beta_{k-1}}(v_{k-1}), so (v, log_w) is a
    weighted sample targeting p_{beta_k}.  The yielded arrays must not be
    modified by the consumer.
    """
    if n_runs < 2:
        raise ValueError("need at least two AIS runs")
    streams = chain_streams(seed, n_runs)
    d, m = path.n_visible, path.target.n_hidden
    v = sample_base_from_uniforms(path, np.stack([g.random(d) for g in streams]))
    log_w = np.zeros(n_runs)
    betas = schedule.betas
    uniforms = _UniformBlocks(streams, m + d)
    yield 0, float(betas[0]), v, log_w
    for k in range(1, betas.size):
        terms = path_terms(v, path)
        log_w = log_w + (log_pstar_beta_from_terms(terms, betas[k], path)
                         - log_pstar_beta_from_terms(terms, betas[k - 1], path))
        yield k, float(betas[k]), v, log_w
        if k < betas.size - 1:
            u = uniforms.next()
            v = gibbs_sweep_from_uniforms(v, betas[k], path, u[:, :m], u[:, m:])


def run_ais(path: GeometricPath, schedule: Schedule, n_runs: int, seed,
            observers: Optional[Sequence[Callable]] = None,
            trace_ess: bool = False) -> AisResult:
    """Estimate log Z of ``path.target`` by AIS.

    Parameters
    ----------
    seed : int or numpy.random.SeedSequence
        Master seed; chain i uses a stream derived from (seed, i).
    observers : sequence of callables, optional
        Each maps a batch of visible states (N, D) to N values.  Their
        self-normalized on-the-fly estimates at every step land in
        ``AisResult.trace_f``.
    trace_ess : bool
        Record the ESS of the on-the-fly weights at every step.
    """
    observers = list(observers or [])
    tracing = trace_ess or bool(observers)
    k_steps = schedule.k
    t_beta = np.empty(k_steps if tracing else 0)
    t_ess = np.empty(k_steps if trace_ess else 0)
    t_f = np.empty((k_steps, len(observers)) if observers else (0, 0))
    log_w = None
    for k, beta, v, log_w in anneal(path, schedule, n_runs, seed):
        if k == 0 or not tracing:
            continue
        t_beta[k - 1] = beta
        if trace_ess:
            t_ess[k - 1] = ess(log_w)
        if observers:
            w = normalized_weights(log_w)
            for j, f in enumerate(observers):
                t_f[k - 1, j] = w @ np.asarray(f(v), dtype=float)
    # Raises DegenerateWeightsError rather than returning NaN.
    log_z_hat = path.log_z_base() + log_mean_exp(log_w)
    return AisResult(
        log_weights=log_w,
        log_z_hat=float(log_z_hat),
        ess=ess(log_w),
        log_weight_std=log_weight_std(log_w),
        log_z_base=path.log_z_base(),
        schedule=schedule,
        trace_betas=t_beta, trace_ess=t_ess, trace_f=t_f,
    )
