"""Exhaustive-enumeration ground truth for small RBMs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .model import (GeometricPath, RbmParams, dlog_pstar_dbeta_from_terms, log_pstar,
                    log_pstar_beta, log_pstar_beta_from_terms, path_terms, softplus)

#: Largest layer size that will be enumerated by default (2**20 states).
ENUMERATION_CAP = 20
#: Largest visible layer for the exact intermediate-distribution routines.
VISIBLE_CAP = 16


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ExactSummary:
    log_z: float
    model_dims: tuple
    method: str  # "enumerate_hidden" or "enumerate_visible"

    def to_dict(self) -> dict:
        return {"log_z": self.log_z, "n_visible": self.model_dims[0],
                "n_hidden": self.model_dims[1], "method": self.method}


def all_states(n: int) -> np.ndarray:
    """All 2**n binary vectors of length n, shape (2**n, n), lexicographic."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=n)), dtype=float).reshape(-1, n)


def _chunks(n: int, chunk_bits: int = 14):
    """Yield blocks of the 2**n binary states to bound memory."""
    if n <= chunk_bits:
        yield all_states(n)
        return
    low = all_states(chunk_bits)
    for high in itertools.product((0.0, 1.0), repeat=n - chunk_bits):
        yield np.hstack([np.broadcast_to(high, (low.shape[0], n - chunk_bits)), low])


def log_z_enumerate_hidden(params: RbmParams) -> float:
    parts = []
    for h in _chunks(params.n_hidden):
        x = h @ params.weights + params.visible_bias
        parts.append(logsumexp(h @ params.hidden_bias + softplus(x).sum(axis=1)))
    return float(logsumexp(parts))


def log_z_enumerate_visible(params: RbmParams) -> float:
    parts = [logsumexp(log_pstar(v, params)) for v in _chunks(params.n_visible)]
    return float(logsumexp(parts))


def exact_log_z(params: RbmParams, method: Optional[str] = None,
                cap: int = ENUMERATION_CAP) -> ExactSummary:
    """Exact log partition function by summing out the smaller layer.

    ``method`` forces "enumerate_hidden" or "enumerate_visible"; by default
    the smaller layer is enumerated.
    """
    d, m = params.n_visible, params.n_hidden
    if method is None:
        method = "enumerate_hidden" if m <= d else "enumerate_visible"
    size = m if method == "enumerate_hidden" else d
    if method not in ("enumerate_hidden", "enumerate_visible"):
        raise ValueError(f"unknown method {method!r}")
    if size > cap:
        raise EnumerationTooLarge(
            f"{method} needs 2**{size} terms, cap is 2**{cap} (D={d}, M={m})")
    if method == "enumerate_hidden":
        log_z = log_z_enumerate_hidden(params)
    else:
        log_z = log_z_enumerate_visible(params)
    return ExactSummary(log_z, (d, m), method)


def _visible_states(path: GeometricPath, cap: int) -> np.ndarray:
    if path.n_visible > cap:
        raise EnumerationTooLarge(
            f"visible enumeration needs 2**{path.n_visible} states, cap is 2**{cap}")
    return all_states(path.n_visible)


def exact_log_probs(path: GeometricPath, beta: float, cap: int = VISIBLE_CAP):
    """Normalized log p_beta over all visible states (lexicographic order)."""
    states = _visible_states(path, cap)
    lp = log_pstar_beta(states, beta, path)
    return lp - logsumexp(lp)


def exact_g(path: GeometricPath, beta, cap: int = VISIBLE_CAP, derivative=None):
    """Variance under p_beta of d/dbeta log p*_beta(v), by enumeration.

    ``beta`` may be a scalar or an array.  ``derivative`` defaults to
    :func:`varopt_ais.model.dlog_pstar_dbeta`.
    """
    states = _visible_states(path, cap)
    betas = np.atleast_1d(np.asarray(beta, dtype=float))
    if np.any(betas < 0.0) or np.any(betas > 1.0):
        raise ValueError("beta must lie in [0, 1]")
    terms = path_terms(states, path)
    out = np.empty(betas.shape)
    for i, b in enumerate(betas):
        lp = log_pstar_beta_from_terms(terms, b, path)
        p = np.exp(lp - logsumexp(lp))
        d = (dlog_pstar_dbeta_from_terms(terms, b, path) if derivative is None
             else derivative(states, b, path))
        mean = p @ d
        out[i] = p @ (d - mean) ** 2
    return out if np.ndim(beta) else float(out[0])


def exact_gibbs_kernel(path: GeometricPath, beta: float) -> np.ndarray:
    """Transition matrix of one block Gibbs sweep, built from the joint.

    Conditionals are obtained by normalizing exp(-E_beta(v, h)) over the
    enumerated joint table rather than from the sigmoid formulas used by
    the sampler.  Row/column order is lexicographic over visible states.
    """
    t, a = path.target, path.base
    vs = all_states(t.n_visible)
    hs = all_states(t.n_hidden)
    # log p*(v, h_B) up to v,h-independent factors; base hiddens decouple.
    joint = (vs @ ((1.0 - beta) * a.visible_bias + beta * t.visible_bias))[:, None] \
        + beta * (hs @ t.weights @ vs.T).T + beta * (hs @ t.hidden_bias)[None, :]
    p_h_given_v = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
    p_v_given_h = np.exp(joint - logsumexp(joint, axis=0, keepdims=True)).T
    return p_h_given_v @ p_v_given_h


def exact_var_log_ratio(path: GeometricPath, beta_from: float, beta_to: float,
                        cap: int = VISIBLE_CAP) -> float:
    """Var_{p_beta_from}[log p*_beta_to(v) - log p*_beta_from(v)]."""
    states = _visible_states(path, cap)
    lp_from = log_pstar_beta(states, beta_from, path)
    p = np.exp(lp_from - logsumexp(lp_from))
    r = log_pstar_beta(states, beta_to, path) - lp_from
    mean = p @ r
    return float(p @ (r - mean) ** 2)
