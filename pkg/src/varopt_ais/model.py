"""Binary RBMs and the geometric annealing path between two of them.

The path interpolates the *parameters* of a tractable base RBM (zero weights)
and a target RBM.  The intermediate model at ``beta`` is an RBM whose hidden
layer is the union of the base hidden units with energy scaled by
``1 - beta`` and the target hidden units with energy scaled by ``beta``:

    E_beta(v, h_A, h_B) = (1 - beta) E_A(h_A, v) + beta E_B(h_B, v)

Marginalizing the hidden units gives ``log_pstar_beta``.  A v-independent
affine correction is subtracted so that the endpoints coincide exactly with
``log_pstar(v, base)`` and ``log_pstar(v, target)``.  Block Gibbs sweeps on
this joint model leave the intermediate marginal exactly invariant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

LN2 = float(np.log(2.0))


def softplus(x):
    """log(1 + exp(x)), stable for large |x|."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


@dataclass(frozen=True, eq=False)
class RbmParams:
    """Parameters of a binary RBM.

    ``weights`` has shape (n_hidden, n_visible); ``weights[i, j]`` couples
    hidden unit i and visible unit j.
    """

    weights: np.ndarray
    hidden_bias: np.ndarray
    visible_bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, ndmin=2)
        a = np.array(self.hidden_bias, dtype=float).ravel()
        b = np.array(self.visible_bias, dtype=float).ravel()
        if w.shape != (a.size, b.size):
            raise ValueError(
                f"weights shape {w.shape} inconsistent with "
                f"n_hidden={a.size}, n_visible={b.size}")
        if a.size < 1 or b.size < 1:
            raise ValueError("RBM needs at least one hidden and one visible unit")
        for name, arr in (("weights", w), ("hidden_bias", a), ("visible_bias", b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "hidden_bias", a)
        object.__setattr__(self, "visible_bias", b)

    @property
    def n_visible(self) -> int:
        return self.visible_bias.size

    @property
    def n_hidden(self) -> int:
        return self.hidden_bias.size

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> "RbmParams":
        return cls(np.zeros((n_hidden, n_visible)), np.zeros(n_hidden),
                   np.zeros(n_visible))

    @classmethod
    def base_for(cls, target: "RbmParams", visible_bias=None) -> "RbmParams":
        """Zero-weight base model on the visible space of ``target``.

        Uniform over visible states unless ``visible_bias`` is given.
        """
        vb = np.zeros(target.n_visible) if visible_bias is None else visible_bias
        return cls(np.zeros((target.n_hidden, target.n_visible)),
                   np.zeros(target.n_hidden), vb)

    def scaled(self, factor: float) -> "RbmParams":
        return RbmParams(factor * self.weights, factor * self.hidden_bias,
                         factor * self.visible_bias)

    def to_dict(self) -> dict:
        return {
            "n_visible": self.n_visible,
            "n_hidden": self.n_hidden,
            "weights": self.weights.tolist(),
            "hidden_bias": self.hidden_bias.tolist(),
            "visible_bias": self.visible_bias.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RbmParams":
        params = cls(np.asarray(d["weights"], dtype=float).reshape(
            d["n_hidden"], d["n_visible"]), d["hidden_bias"], d["visible_bias"])
        if params.n_visible != d["n_visible"] or params.n_hidden != d["n_hidden"]:
            raise ValueError("declared dimensions do not match arrays")
        return params


def _check_visible(v, params: RbmParams) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != params.n_visible:
        raise ValueError(
            f"visible state has length {v.shape[-1]}, model expects {params.n_visible}")
    return v


def energy(h, v, params: RbmParams) -> float:
    """Joint energy E(h, v) of a single configuration."""
    h = np.asarray(h, dtype=float)
    v = _check_visible(v, params)
    if h.shape != (params.n_hidden,) or v.shape != (params.n_visible,):
        raise ValueError("h and v must be single configurations matching the model")
    return float(-(h @ params.weights @ v) - params.hidden_bias @ h
                 - params.visible_bias @ v)


def log_pstar(v, params: RbmParams):
    """Log unnormalized marginal probability of visible states.

    Hidden units are summed out in closed form.  ``v`` may be a single state
    of shape (D,) or a batch (..., D).
    """
    v = _check_visible(v, params)
    x = v @ params.weights.T + params.hidden_bias
    return v @ params.visible_bias + softplus(x).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class GeometricPath:
    """Annealing path from a zero-weight ``base`` to an arbitrary ``target``."""

    base: RbmParams
    target: RbmParams

    def __post_init__(self):
        if self.base.n_visible != self.target.n_visible:
            raise ValueError("base and target must share the visible space")
        if np.any(self.base.weights != 0.0):
            raise ValueError("base model must have all-zero weights to be sampleable")

    @property
    def n_visible(self) -> int:
        return self.target.n_visible

    @classmethod
    def from_target(cls, target: RbmParams, base_visible_bias=None) -> "GeometricPath":
        return cls(RbmParams.base_for(target, base_visible_bias), target)

    def log_z_base(self) -> float:
        """Exact log partition function of the factorial base model."""
        return float(softplus(self.base.hidden_bias).sum()
                     + softplus(self.base.visible_bias).sum())


def _check_beta(beta):
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0.0) or np.any(beta > 1.0):
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return beta


def path_terms(v, path: GeometricPath):
    """Per-state quantities from which ``log_pstar_beta`` is assembled.

    Computing these once lets callers evaluate the intermediate log density
    at several betas for the same batch of states.
    """
    base, target = path.base, path.target
    v = _check_visible(v, target)
    # Zero base weights make the base hidden field v-independent; keeping it
    # as a bare vector lets it broadcast over the batch.
    return (v @ base.visible_bias, v @ target.visible_bias,
            base.hidden_bias,
            v @ target.weights.T + target.hidden_bias)


def log_pstar_beta_from_terms(terms, beta: float, path: GeometricPath):
    va, vb, xa, xb = terms
    # Unscaled hidden units contribute a free log(2) each at the endpoints.
    offset = ((1.0 - beta) * path.target.n_hidden + beta * path.base.n_hidden) * LN2
    return ((1.0 - beta) * va + beta * vb
            + softplus((1.0 - beta) * xa).sum(axis=-1)
            + softplus(beta * xb).sum(axis=-1)
            - offset)


def log_pstar_beta(v, beta: float, path: GeometricPath):
    """Log unnormalized probability of ``v`` under the intermediate model."""
    beta = float(_check_beta(beta))
    return log_pstar_beta_from_terms(path_terms(v, path), beta, path)


def dlog_pstar_dbeta_from_terms(terms, beta: float, path: GeometricPath):
    va, vb, xa, xb = terms
    return (vb - va
            + (xb * expit(beta * xb)).sum(axis=-1)
            - (xa * expit((1.0 - beta) * xa)).sum(axis=-1)
            + (path.target.n_hidden - path.base.n_hidden) * LN2)


def dlog_pstar_dbeta(v, beta: float, path: GeometricPath):
    """Derivative of ``log_pstar_beta`` with respect to beta."""
    beta = float(_check_beta(beta))
    return dlog_pstar_dbeta_from_terms(path_terms(v, path), beta, path)


def hidden_probs(v, beta: float, path: GeometricPath) -> np.ndarray:
    """P(h_B = 1 | v) for the target hidden units at ``beta``.

    Base hidden units are not represented: with zero base weights they are
    independent of v and never influence the visible conditional.
    """
    t = path.target
    return expit(beta * (np.asarray(v, dtype=float) @ t.weights.T + t.hidden_bias))


def visible_probs(h, beta: float, path: GeometricPath) -> np.ndarray:
    """P(v = 1 | h_B) at ``beta``."""
    t, a = path.target, path.base
    field = ((1.0 - beta) * a.visible_bias
             + beta * (t.visible_bias + np.asarray(h, dtype=float) @ t.weights))
    return expit(field)


def gibbs_sweep_from_uniforms(v, beta, path, u_hidden, u_visible):
    """One hidden-then-visible block Gibbs sweep driven by given uniforms.

    ``u_hidden`` has shape (..., M) and ``u_visible`` shape (..., D) matching
    the batch shape of ``v``.
    """
    h = (u_hidden < hidden_probs(v, beta, path)).astype(float)
    return (u_visible < visible_probs(h, beta, path)).astype(float)


def gibbs_transition(v, beta: float, path: GeometricPath,
                     rng: np.random.Generator) -> np.ndarray:
    """Sample the next visible state(s) with a kernel invariant for p_beta."""
    beta = float(_check_beta(beta))
    v = _check_visible(v, path.target)
    batch = v.shape[:-1]
    u_h = rng.random(batch + (path.target.n_hidden,))
    u_v = rng.random(batch + (path.n_visible,))
    return gibbs_sweep_from_uniforms(v, beta, path, u_h, u_v)


def sample_base_from_uniforms(path: GeometricPath, u) -> np.ndarray:
    return (np.asarray(u) < expit(path.base.visible_bias)).astype(float)


def sample_base(path: GeometricPath, rng: np.random.Generator, size=None) -> np.ndarray:
    """Exact draws from the factorial base model.

    Returns one state of shape (D,) when ``size`` is None, else (size, D).
    """
    if np.any(path.base.weights != 0.0):
        raise ValueError("exact base sampling requires zero base weights")
    shape = (path.n_visible,) if size is None else (size, path.n_visible)
    return sample_base_from_uniforms(path, rng.random(shape))
