"""Variance-optimal annealing schedules.

Under perfect transitions, K * Var[log w] tends to the functional

    J[beta] = integral_0^1 beta'(t)^2 g(beta(t)) dt,

with g(beta) the variance under p_beta of d/dbeta log p*_beta(v).  Its
minimizer obeys

    beta'' + (beta'^2 / 2) d/dbeta log g(beta) = 0,  beta(0) = 0, beta(1) = 1,

which :func:`de_solve` solves on a grid.  :func:`quadrature_schedule` is an
independent route via the first integral beta'^2 g(beta) = const.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import logsumexp

from .ais import Schedule, anneal, normalized_weights
from .model import GeometricPath, dlog_pstar_dbeta, log_pstar_beta
from .oracle import VISIBLE_CAP, EnumerationTooLarge, all_states

#: Relative floor applied to g before taking logs.
G_FLOOR = 1e-12
#: Tables whose largest g is at or below this are treated as a flat path.
G_DEGENERATE = 1e-12


class ScheduleError(RuntimeError):
    pass


class DegenerateTableWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GTable:
    """g(beta) sampled on a uniform grid over [0, 1]."""

    grid: np.ndarray
    g_raw: np.ndarray
    g_smoothed: Optional[np.ndarray] = None
    dlog_g: Optional[np.ndarray] = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 3:
            raise ValueError("grid needs at least three points")
        step = np.diff(grid)
        if grid[0] != 0.0 or abs(grid[-1] - 1.0) > 1e-12 or np.any(step <= 0):
            raise ValueError("grid must increase strictly from 0 to 1")
        if np.ptp(step) > 1e-9 * step.mean():
            raise ValueError("grid must be uniformly spaced")
        for name in ("g_raw", "g_smoothed", "dlog_g"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            if arr.shape != grid.shape:
                raise ValueError(f"{name} must match the grid shape")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            if name != "dlog_g" and np.any(arr < 0):
                raise ValueError(f"{name} must be non-negative")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "grid", grid)

    @property
    def k_tilde(self) -> int:
        return self.grid.size - 1

    @property
    def g(self) -> np.ndarray:
        """Smoothed values when available, otherwise the raw estimates."""
        return self.g_raw if self.g_smoothed is None else self.g_smoothed

    @property
    def degenerate(self) -> bool:
        return float(np.max(self.g_raw)) <= G_DEGENERATE

    def __call__(self, beta):
        return np.interp(beta, self.grid, self.g)

    @classmethod
    def from_function(cls, g: Callable, k_tilde: int) -> "GTable":
        """Tabulate an analytic g on a (k_tilde + 1)-point grid."""
        grid = np.linspace(0.0, 1.0, k_tilde + 1)
        return dlog_g(smooth(cls(grid, np.asarray(g(grid), dtype=float) * np.ones_like(grid)), 0))


def linear_schedule(k_steps: int) -> Schedule:
    if k_steps < 1:
        raise ValueError("need at least one annealing step")
    return Schedule(np.arange(k_steps + 1) / k_steps)


def estimate_g_table(path: GeometricPath, k_tilde: int, n_tilde: int, seed,
                     weighted: bool = True) -> GTable:
    """Estimate g on the linear k_tilde-grid from one cheap AIS pass.

    At grid point k the chains' states v_{k-1}, weighted by their on-the-fly
    importance weights, target p_{beta_k}; g is their weighted variance of
    d/dbeta log p*_beta.  With ``weighted=False`` the chains are averaged
    without weights.
    """
    if k_tilde < 10 or n_tilde < 10:
        raise ValueError("k_tilde and n_tilde must both be at least 10")
    schedule = linear_schedule(k_tilde)
    g = np.empty(k_tilde + 1)
    for k, beta, v, log_w in anneal(path, schedule, n_tilde, seed):
        d = dlog_pstar_dbeta(v, beta, path)
        if weighted:
            try:
                w = normalized_weights(log_w)
            except FloatingPointError as exc:
                raise ScheduleError(f"g estimation failed at step {k}: {exc}") from exc
        else:
            w = np.full(n_tilde, 1.0 / n_tilde)
        mean = w @ d
        g[k] = w @ (d - mean) ** 2
    return GTable(schedule.betas.copy(), g)


def smooth(table: GTable, half_width: int) -> GTable:
    """Moving-average the raw g with a (2 * half_width + 1)-point box.

    Windows are truncated at the ends and averaged over the points they
    cover.  Values are then floor-clamped to G_FLOOR * max so that log g is
    defined.  Any previously computed derivative is discarded.
    """
    if half_width < 0:
        raise ValueError("half_width must be non-negative")
    g = table.g_raw
    n = g.size
    if half_width == 0:
        out = g.copy()
    else:
        csum = np.concatenate([[0.0], np.cumsum(g)])
        idx = np.arange(n)
        lo = np.maximum(idx - half_width, 0)
        hi = np.minimum(idx + half_width + 1, n)
        out = (csum[hi] - csum[lo]) / (hi - lo)
    out = np.maximum(out, 0.0)
    peak = out.max()
    if peak > 0:
        out = np.maximum(out, G_FLOOR * peak)
    return replace(table, g_smoothed=out, dlog_g=None)


def default_half_width(k_tilde: int) -> int:
    return math.ceil(k_tilde / 100)


def dlog_g(table: GTable) -> GTable:
    """d/dbeta log g by central differences (one-sided at the ends)."""
    g = table.g
    if table.g_smoothed is None:
        g = smooth(table, 0).g_smoothed
    if np.max(g) <= 0:
        deriv = np.zeros_like(g)
    else:
        deriv = np.gradient(np.log(g), table.grid, edge_order=1)
    return replace(table, g_smoothed=g, dlog_g=deriv)


def _fallback_linear(k_steps: int, why: str) -> Schedule:
    warnings.warn(f"{why}; falling back to the linear schedule",
                  DegenerateTableWarning, stacklevel=3)
    return linear_schedule(k_steps)


def quadrature_schedule(table: GTable, k_steps: int) -> Schedule:
    """Optimal schedule from the first integral of the Euler-Lagrange equation.

    beta_k solves int_0^beta_k sqrt(g) = (k / K) int_0^1 sqrt(g), with the
    integral done by the trapezoid rule on the grid and inverted by linear
    interpolation.
    """
    if k_steps < 1:
        raise ValueError("need at least one annealing step")
    if table.degenerate:
        return _fallback_linear(k_steps, "g vanishes along the path")
    root = np.sqrt(table.g)
    h = np.diff(table.grid)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (root[1:] + root[:-1]))])
    total = cum[-1]
    if not total > 0:
        return _fallback_linear(k_steps, "integral of sqrt(g) is zero")
    targets = np.arange(k_steps + 1) / k_steps * total
    betas = np.interp(targets, cum, table.grid)
    betas[0], betas[-1] = 0.0, 1.0
    return Schedule(np.maximum.accumulate(betas))


def _interp_with_slope(x, xp, fp):
    """Piecewise-linear interpolant and its slope at x."""
    idx = np.clip(np.searchsorted(xp, x, side="right") - 1, 0, xp.size - 2)
    slope = (fp[idx + 1] - fp[idx]) / (xp[idx + 1] - xp[idx])
    return fp[idx] + slope * (x - xp[idx]), slope


def el_residual(betas, table: GTable) -> np.ndarray:
    """beta'' + (beta'^2 / 2) dlog_g(beta) at interior points.

    Central differences on the uniform t-grid of the schedule.
    """
    b = np.asarray(betas, dtype=float)
    if table.dlog_g is None:
        table = dlog_g(table)
    dt = 1.0 / (b.size - 1)
    acc = (b[2:] - 2.0 * b[1:-1] + b[:-2]) / dt ** 2
    vel = (b[2:] - b[:-2]) / (2.0 * dt)
    return acc + 0.5 * vel ** 2 * np.interp(b[1:-1], table.grid, table.dlog_g)


def _el_system(b, table):
    """Residual F (scaled by dt^2) and the pieces of its Jacobian.

    F_k = b[k+1] - 2 b[k] + b[k-1] + (b[k+1] - b[k-1])^2 / 8 * L(b[k]).
    """
    lg, dlg = _interp_with_slope(np.clip(b[1:-1], 0.0, 1.0), table.grid, table.dlog_g)
    span = b[2:] - b[:-2]
    return b[2:] - 2.0 * b[1:-1] + b[:-2] + span ** 2 / 8.0 * lg, lg, dlg, span


def _newton_step(F, lg, slope, span):
    n = F.size
    ab = np.zeros((3, n))
    ab[0, 1:] = (1.0 + span * lg / 4.0)[:-1]    # d F_k / d b[k+1]
    ab[1] = -2.0 + span ** 2 / 8.0 * slope       # d F_k / d b[k]
    ab[2, :-1] = (1.0 - span * lg / 4.0)[1:]     # d F_k / d b[k-1]
    return solve_banded((1, 1), ab, -F)


def _newton(b, table, tol, max_iter, secant_passes=3):
    """Newton iteration with a backtracking line search on |F|.

    L is piecewise linear, so its tangent slope can be badly wrong once a
    step crosses a grid node.  The step is therefore re-solved with the
    secant slope of L over each point's own step, which is exact when a
    single kink is crossed.
    """
    F, lg, dlg, span = _el_system(b, table)
    norm = np.linalg.norm(F)
    update = np.inf
    for it in range(1, max_iter + 1):
        slope = dlg
        x = np.clip(b[1:-1], 0.0, 1.0)
        for _ in range(secant_passes):
            step = _newton_step(F, lg, slope, span)
            y = np.clip(b[1:-1] + step, 0.0, 1.0)
            dx = y - x
            moved = np.abs(dx) > 1e-15
            secant = np.where(moved, (np.interp(y, table.grid, table.dlog_g) - lg)
                              / np.where(moved, dx, 1.0), dlg)
            if np.allclose(secant, slope, rtol=1e-12, atol=0.0):
                break
            slope = secant
        update = float(np.max(np.abs(step)))
        if update < tol:
            b = b.copy()
            b[1:-1] += step
            return b, it, update
        t = 1.0
        while True:
            trial = b.copy()
            trial[1:-1] += t * step
            parts = _el_system(trial, table)
            trial_norm = np.linalg.norm(parts[0])
            if trial_norm <= (1.0 - 1e-4 * t) * norm or t < 1e-6:
                break
            t *= 0.5
        b, (F, lg, dlg, span), norm = trial, parts, trial_norm
        update = t * update
    return b, max_iter, update


def _gauss_seidel(b, table, tol, max_iter, relax=0.9):
    """Under-relaxed red-black Gauss-Seidel sweeps of the fixed-point map

        b[k] <- (b[k+1] + b[k-1]) / 2 + (b[k+1] - b[k-1])^2 / 16 * L(b[k]).
    """
    b = b.copy()
    n = b.size
    odd, even = np.arange(1, n - 1, 2), np.arange(2, n - 1, 2)
    update = np.inf
    for it in range(1, max_iter + 1):
        update = 0.0
        for idx in (odd, even):
            if idx.size == 0:
                continue
            span = b[idx + 1] - b[idx - 1]
            lg = np.interp(np.clip(b[idx], 0.0, 1.0), table.grid, table.dlog_g)
            target = 0.5 * (b[idx + 1] + b[idx - 1]) + span ** 2 / 16.0 * lg
            delta = relax * (target - b[idx])
            b[idx] += delta
            update = max(update, float(np.max(np.abs(delta))))
        if update < tol:
            return b, it, update
    return b, max_iter, update


def _refinement(start: np.ndarray, table: GTable) -> int:
    """Grid refinement factor for the central scheme.

    Along the optimum log(step) changes by about step * dlog_g / 2 per
    step; where that is large the central scheme is inaccurate and Newton
    can land on spurious roots.  Steps spanning many table cells make the
    piecewise-linear dlog_g look rough.  Refine until the first is at most
    0.1 and steps cover at most two cells.
    """
    steps = np.diff(start)
    lg = np.abs(np.interp(start, table.grid, table.dlog_g))
    change = float(np.max(steps * np.maximum(lg[1:], lg[:-1]) / 2.0))
    cells = float(np.max(steps)) / (table.grid[1] - table.grid[0])
    return max(1, math.ceil(change / 0.1), math.ceil(cells / 2.0))


def de_solve(table: GTable, k_steps: int, tol: float = 1e-8,
             max_iter: int = 200, method: str = "newton") -> Schedule:
    """Solve the Euler-Lagrange boundary value problem for the schedule.

    The ODE is discretized on t_k = k / K with central differences and the
    resulting nonlinear system is solved by fixed-point iteration, started
    from :func:`quadrature_schedule`.  ``method="newton"`` uses Newton steps
    (tridiagonal Jacobian); ``method="gauss-seidel"`` uses under-relaxed
    pointwise sweeps, which need O(K^2) iterations to converge on fine grids.

    When K steps cannot resolve g (steps spanning several table cells, or
    step * |dlog g| large) the central scheme admits spurious solutions.
    The system is then solved on an m-times finer grid and every m-th point
    is returned; the residual bound holds on that finer grid.

    Raises ScheduleError if the iteration does not converge within
    ``max_iter`` or the converged solution is not monotone.
    """
    if k_steps < 2:
        raise ValueError("de_solve needs K >= 2")
    if table.degenerate:
        return _fallback_linear(k_steps, "g vanishes along the path")
    if table.dlog_g is None:
        table = dlog_g(table)
    m = _refinement(quadrature_schedule(table, k_steps).betas, table)
    start = quadrature_schedule(table, m * k_steps).betas.copy()
    if method == "newton":
        b, n_iter, update = _newton(start, table, tol, max_iter)
    elif method == "gauss-seidel":
        b, n_iter, update = _gauss_seidel(start, table, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not update < tol:
        res = float(np.max(np.abs(el_residual(b, table))))
        raise ScheduleError(
            f"de_solve did not converge in {max_iter} iterations "
            f"(last update {update:.3e}, residual {res:.3e})")
    if np.any(np.diff(b) < -1e-9):
        raise ScheduleError("de_solve converged to a non-monotone schedule")
    b = np.maximum.accumulate(np.clip(b[::m], 0.0, 1.0))
    b[0], b[-1] = 0.0, 1.0
    return Schedule(b)


def decelerate(schedule: Schedule, max_delta: float, tol: float = 1e-6,
               max_iter: int = 10_000) -> Schedule:
    """Cap every step at ``max_delta`` while keeping the schedule on [0, 1].

    Repeatedly clips the steps at ``max_delta`` and rescales them to unit
    sum, stopping once the clipped sum is within ``tol`` of one.  Schedules
    already satisfying the cap (up to a factor 1 + tol) are returned as is.
    """
    if not 0.0 < max_delta <= 1.0:
        raise ValueError("max_delta must lie in (0, 1]")
    deltas = schedule.deltas.copy()
    k = deltas.size
    if k * max_delta < 1.0:
        raise ScheduleError(
            f"infeasible: {k} steps of at most {max_delta} cannot span [0, 1]")
    if np.max(deltas) <= max_delta * (1.0 + tol):
        return schedule
    for _ in range(max_iter):
        np.minimum(deltas, max_delta, out=deltas)
        norm = deltas.sum()
        deltas /= norm
        if abs(norm - 1.0) < tol:
            break
    else:
        raise ScheduleError(f"deceleration did not converge in {max_iter} iterations")
    betas = np.concatenate([[0.0], np.cumsum(deltas)])
    betas[-1] = 1.0
    return Schedule(np.minimum(betas, 1.0))


def functional_j(schedule: Schedule, g: Union[GTable, Callable]) -> float:
    """K * sum_k (beta_{k+1} - beta_k)^2 g(beta_k), the discrete functional.

    ``g`` is either a GTable (interpolated linearly) or a vectorized
    callable, e.g. an exact g.
    """
    b = schedule.betas
    vals = np.asarray(g(b[:-1]), dtype=float)
    return float(schedule.k * np.sum(np.diff(b) ** 2 * vals))


def var_log_w_perfect(path: GeometricPath, schedule: Schedule,
                      cap: int = VISIBLE_CAP, chunk: int = 512) -> float:
    """Exact Var[log w] under perfect transitions, by visible enumeration.

    Sums over k of Var_{p_beta_k}[log p*_{beta_{k+1}}(v) - log p*_{beta_k}(v)].
    """
    if path.n_visible > cap:
        raise EnumerationTooLarge(
            f"perfect-transition variance needs 2**{path.n_visible} states")
    states = all_states(path.n_visible)
    b = schedule.betas
    total = 0.0
    prev = log_pstar_beta(states, b[0], path)
    for start in range(0, b.size - 1, chunk):
        stop = min(start + chunk, b.size - 1)
        lp = np.stack([prev] + [log_pstar_beta(states, x, path)
                                for x in b[start + 1:stop + 1]])
        p = np.exp(lp[:-1] - logsumexp(lp[:-1], axis=1, keepdims=True))
        r = lp[1:] - lp[:-1]
        mean = np.sum(p * r, axis=1, keepdims=True)
        total += float(np.sum(p * (r - mean) ** 2))
        prev = lp[-1]
    return total
