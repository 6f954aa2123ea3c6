import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from varopt_ais.ais import Schedule
from varopt_ais.model import GeometricPath, dlog_pstar_dbeta, log_pstar_beta
from varopt_ais.oracle import all_states, exact_g, exact_log_probs, exact_var_log_ratio
from varopt_ais.schedule import (DegenerateTableWarning, GTable, ScheduleError, de_solve,
                                 decelerate, default_half_width, dlog_g, el_residual,
                                 estimate_g_table, functional_j, linear_schedule,
                                 quadrature_schedule, smooth, var_log_w_perfect)

from conftest import random_path, random_rbm

E = math.e


def analytic_exp2(t):
    return np.log1p((E - 1.0) * np.asarray(t))


def random_schedule(k, seed):
    d = np.random.default_rng(seed).uniform(0.1, 1.0, size=k)
    return Schedule(np.concatenate([[0.0], np.cumsum(d) / d.sum()]))


# --- linear -----------------------------------------------------------------

def test_linear_examples():
    np.testing.assert_array_equal(linear_schedule(4).betas, [0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(linear_schedule(1).betas, [0, 1])
    assert np.max(linear_schedule(10).deltas) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        linear_schedule(0)


# --- GTable -----------------------------------------------------------------

def test_gtable_validation():
    grid = np.linspace(0, 1, 5)
    with pytest.raises(ValueError):
        GTable(grid, -np.ones(5))
    with pytest.raises(ValueError):
        GTable(grid[::-1], np.ones(5))
    with pytest.raises(ValueError):
        GTable(np.array([0, 0.1, 0.5, 1.0]), np.ones(4))
    with pytest.raises(ValueError):
        GTable(grid, np.ones(4))
    with pytest.raises(ValueError):
        GTable(grid, np.array([1, np.nan, 1, 1, 1]))


# --- smoothing and derivative ----------------------------------------------

def test_smooth_identity_and_constant():
    raw = np.array([0.3, 2.0, 0.1, 4.0, 1.0])
    t = GTable(np.linspace(0, 1, 5), raw)
    np.testing.assert_array_equal(smooth(t, 0).g_smoothed, raw)
    c = GTable(np.linspace(0, 1, 9), np.full(9, 2.5))
    np.testing.assert_allclose(smooth(c, 3).g_smoothed, 2.5, rtol=1e-15)


def test_smooth_window_example():
    t = smooth(GTable(np.linspace(0, 1, 5), [0.0, 1.0, 0.0, 1.0, 0.0]), 1)
    np.testing.assert_allclose(t.g_smoothed[1:-1], [1 / 3, 2 / 3, 1 / 3], rtol=1e-15)
    # truncated end windows average what they cover
    np.testing.assert_allclose(t.g_smoothed[[0, -1]], [0.5, 0.5])


def test_smooth_matches_direct_average():
    rng = np.random.default_rng(0)
    raw = rng.exponential(size=41)
    h = 4
    got = smooth(GTable(np.linspace(0, 1, 41), raw), h).g_smoothed
    direct = [raw[max(i - h, 0):i + h + 1].mean() for i in range(41)]
    np.testing.assert_allclose(got, direct, rtol=1e-12)


def test_smooth_floor_keeps_logs_finite():
    t = dlog_g(smooth(GTable(np.linspace(0, 1, 11), [0, 0, 0, 1, 2, 3, 2, 1, 0, 0, 0.0]), 0))
    assert np.all(t.g_smoothed > 0)
    assert np.all(np.isfinite(t.dlog_g))


def test_default_half_width():
    assert default_half_width(1000) == 10
    assert default_half_width(50) == 1


def test_dlog_g_constant_is_zero():
    t = GTable.from_function(lambda b: np.full_like(b, 3.0), 50)
    np.testing.assert_allclose(t.dlog_g, 0.0, atol=1e-12)


def test_dlog_g_exponential():
    t = GTable.from_function(lambda b: np.exp(2 * b), 100)
    np.testing.assert_allclose(t.dlog_g[1:-1], 2.0, atol=1e-10)


def test_dlog_g_polynomial():
    t = GTable.from_function(lambda b: (1 + b) ** 2, 100)
    assert t.dlog_g[50] == pytest.approx(4 / 3, abs=1e-4)
    # second-order in the interior
    t2 = GTable.from_function(lambda b: (1 + b) ** 2, 200)
    err1 = abs(t.dlog_g[50] - 4 / 3)
    err2 = abs(t2.dlog_g[100] - 4 / 3)
    assert err2 < err1 / 3


# --- quadrature ---------------------------------------------------------------

def test_quadrature_constant_is_linear():
    s = quadrature_schedule(GTable.from_function(lambda b: 0 * b + 7.0, 64), 16)
    np.testing.assert_allclose(s.betas, linear_schedule(16).betas, atol=1e-15)


def test_quadrature_exponential():
    s = quadrature_schedule(GTable.from_function(lambda b: np.exp(2 * b), 1000), 200)
    np.testing.assert_allclose(s.betas, analytic_exp2(np.linspace(0, 1, 201)), atol=1e-6)


def test_quadrature_concentrated_near_zero():
    # int_0^b sqrt(g) = 2 (sqrt(b + 0.01) - 0.1), so a quarter of the steps
    # land below 0.1 although that is a tenth of the interval
    s = quadrature_schedule(GTable.from_function(lambda b: 1.0 / (b + 0.01), 4000), 1000)
    frac = (math.sqrt(0.11) - 0.1) / (math.sqrt(1.01) - 0.1)
    assert np.mean(s.betas[1:] < 0.1) == pytest.approx(frac, abs=2e-3)
    inv = lambda u: (0.1 + u * (math.sqrt(1.01) - 0.1)) ** 2 - 0.01
    np.testing.assert_allclose(s.betas, inv(np.linspace(0, 1, 1001)), atol=1e-4)
    # with g = (b + 0.01)^-2 the majority does fall below 0.1
    s2 = quadrature_schedule(GTable.from_function(lambda b: (b + 0.01) ** -2.0, 4000), 100)
    assert np.sum(s2.betas[1:] < 0.1) > 50


def test_quadrature_zero_table_falls_back():
    t = GTable(np.linspace(0, 1, 11), np.zeros(11))
    with pytest.warns(DegenerateTableWarning):
        s = quadrature_schedule(t, 5)
    np.testing.assert_array_equal(s.betas, linear_schedule(5).betas)


# --- de_solve -----------------------------------------------------------------

def test_de_solve_constant_is_linear():
    s = de_solve(GTable.from_function(lambda b: 0 * b + 2.0, 100), 50)
    np.testing.assert_allclose(s.betas, linear_schedule(50).betas, atol=1e-12)


def test_de_solve_exponential_closed_form():
    table = GTable.from_function(lambda b: np.exp(2 * b), 1000)
    s = de_solve(table, 1000, tol=1e-8)
    assert s.betas[500] == pytest.approx(0.6201, abs=1e-4)
    assert np.max(np.abs(s.betas - analytic_exp2(np.linspace(0, 1, 1001)))) < 1e-3
    assert np.max(np.abs(el_residual(s.betas, table))) < 10 * 1e-8


@pytest.mark.parametrize("g", [lambda b: 0 * b + 1.0, lambda b: np.exp(2 * b),
                               lambda b: (1 + 10 * b) ** 2])
def test_de_solve_matches_first_integral(g):
    table = GTable.from_function(g, 1000)
    s = de_solve(table, 1000)
    q = quadrature_schedule(table, 1000)
    assert np.max(np.abs(s.betas - q.betas)) < 1e-3
    # beta'^2 g constant along the optimum, central velocity at interior points
    b = s.betas
    vel2g = ((b[2:] - b[:-2]) / 2) ** 2 * g(b[1:-1])
    assert np.ptp(vel2g) / np.mean(vel2g) < 0.02


@pytest.mark.parametrize("k", [50, 200, 1000])
def test_de_solve_sharp_profile_refines(k):
    # log(step) would change by ~30% per step on K points; the solver must
    # refine instead of settling on a spurious root of the coarse scheme.
    table = GTable.from_function(lambda b: 1e-3 + np.exp(-((b - 0.7) / 0.03) ** 2), 2000)
    s = de_solve(table, k)
    assert s.k == k
    assert np.max(np.abs(s.betas - quadrature_schedule(table, k).betas)) < 1e-3


def test_de_solve_gauss_seidel_option():
    table = GTable.from_function(lambda b: np.exp(2 * b), 20)
    s = de_solve(table, 20, tol=1e-12, max_iter=20_000, method="gauss-seidel")
    n = de_solve(table, 20, tol=1e-12)
    np.testing.assert_allclose(s.betas, n.betas, atol=1e-9)


def test_de_solve_nonconvergence_reports_residual():
    table = GTable.from_function(lambda b: (1 + 10 * b) ** 2, 1000)
    with pytest.raises(ScheduleError, match="residual"):
        de_solve(table, 1000, tol=1e-14, max_iter=3, method="gauss-seidel")


def test_de_solve_bad_arguments():
    table = GTable.from_function(lambda b: 1 + b, 50)
    with pytest.raises(ValueError):
        de_solve(table, 1)
    with pytest.raises(ValueError):
        de_solve(table, 10, method="bisection")


def test_de_solve_degenerate_table_warns():
    with pytest.warns(DegenerateTableWarning):
        s = de_solve(GTable(np.linspace(0, 1, 21), np.zeros(21)), 8)
    np.testing.assert_array_equal(s.betas, linear_schedule(8).betas)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), c=st.floats(0.1, 10), k=st.integers(5, 200))
def test_de_solve_monotone_endpoints(a, c, k):
    s = de_solve(GTable.from_function(lambda b: c * np.exp(a * b * b), 200), k)
    assert s.betas[0] == 0.0 and s.betas[-1] == 1.0
    assert np.all(np.diff(s.betas) >= 0)


# --- decelerate ----------------------------------------------------------------

def test_decelerate_fixed_point():
    s = decelerate(Schedule([0.0, 0.6, 0.8, 1.0]), 0.5, tol=1e-9)
    np.testing.assert_allclose(s.deltas, [0.5, 0.25, 0.25], atol=1e-6)
    np.testing.assert_allclose(s.betas, [0, 0.5, 0.75, 1.0], atol=1e-6)
    again = decelerate(s, 0.5, tol=1e-9)
    np.testing.assert_array_equal(again.betas, s.betas)


def test_decelerate_noop_when_within_cap():
    s = Schedule([0.0, 0.3, 0.7, 1.0])
    assert decelerate(s, 0.5) is s


def test_decelerate_infeasible():
    with pytest.raises(ScheduleError, match="infeasible"):
        decelerate(linear_schedule(3), 0.3)
    with pytest.raises(ValueError):
        decelerate(linear_schedule(3), 0.0)


@settings(max_examples=60, deadline=None)
@given(k=st.integers(2, 60), seed=st.integers(0, 10_000), slack=st.floats(1.0, 3.0))
def test_decelerate_properties(k, seed, slack):
    s = random_schedule(k, seed)
    cap = min(1.0, slack / k)
    out = decelerate(s, cap, tol=1e-9)
    assert out.betas[0] == 0.0 and out.betas[-1] == 1.0
    assert np.max(out.deltas) <= cap * (1 + 1e-9) + 1e-15
    assert np.all(out.deltas >= 0)
    np.testing.assert_array_equal(decelerate(out, cap, tol=1e-9).betas, out.betas)


# --- functional ---------------------------------------------------------------

def test_functional_constant_g():
    one = lambda b: np.ones_like(b)
    assert functional_j(linear_schedule(37), one) == pytest.approx(1.0, rel=1e-14)
    assert functional_j(random_schedule(37, 1), one) > 1.0


def test_functional_exponential_limits():
    g = lambda b: np.exp(2 * b)
    k = 100_000
    assert functional_j(linear_schedule(k), g) == pytest.approx((E * E - 1) / 2, rel=1e-4)
    opt = Schedule(analytic_exp2(np.linspace(0, 1, k + 1)))
    assert functional_j(opt, g) == pytest.approx((E - 1) ** 2, rel=1e-4)


def test_functional_accepts_table():
    t = GTable.from_function(lambda b: 1 + b, 100)
    s = linear_schedule(10)
    assert functional_j(s, t) == pytest.approx(functional_j(s, lambda b: 1 + b), rel=1e-12)


# --- perfect-transition variance ------------------------------------------------

def test_var_perfect_identical_models_is_zero():
    target = random_rbm(4, 3, seed=2)
    path = GeometricPath(GeometricPath.from_target(target).base, GeometricPath.from_target(target).base)
    assert var_log_w_perfect(path, random_schedule(9, 0)) == pytest.approx(0.0, abs=1e-20)


def test_var_perfect_single_step_direct(small_path):
    states = all_states(small_path.n_visible)
    p = np.exp(exact_log_probs(small_path, 0.0))
    r = log_pstar_beta(states, 1.0, small_path) - log_pstar_beta(states, 0.0, small_path)
    direct = p @ r ** 2 - (p @ r) ** 2
    assert var_log_w_perfect(small_path, Schedule([0.0, 1.0])) == pytest.approx(direct, rel=1e-10)
    assert exact_var_log_ratio(small_path, 0.0, 1.0) == pytest.approx(direct, rel=1e-10)


def test_var_perfect_chunking_invariant(small_path):
    s = random_schedule(40, 3)
    assert var_log_w_perfect(small_path, s, chunk=7) == pytest.approx(
        var_log_w_perfect(small_path, s), rel=1e-12)


def test_var_perfect_approaches_functional(small_path):
    g = lambda b: exact_g(small_path, b)
    J = quad(lambda b: float(g(b)), 0, 1, limit=200)[0]
    gaps = [abs(k * var_log_w_perfect(small_path, linear_schedule(k)) - J) / J
            for k in (10, 100, 1000)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.01


# --- g estimation ------------------------------------------------------------------

def test_estimate_g_identical_models_is_zero():
    base = GeometricPath.from_target(random_rbm(5, 3, 0)).base
    t = estimate_g_table(GeometricPath(base, base), 20, 50, seed=0)
    np.testing.assert_allclose(t.g_raw, 0.0, atol=1e-20)
    assert t.degenerate


def test_estimate_g_nonnegative_and_deterministic(small_path):
    a = estimate_g_table(small_path, 20, 40, seed=3)
    b = estimate_g_table(small_path, 20, 40, seed=3)
    assert np.all(a.g_raw >= 0)
    np.testing.assert_array_equal(a.g_raw, b.g_raw)
    assert a.k_tilde == 20


def test_estimate_g_endpoint_uses_base_samples(small_path):
    t = estimate_g_table(small_path, 10, 4000, seed=1, weighted=False)
    assert t.g_raw[0] == pytest.approx(float(exact_g(small_path, 0.0)), rel=0.1)


def test_estimate_g_rejects_small_sizes(small_path):
    with pytest.raises(ValueError):
        estimate_g_table(small_path, 5, 100, seed=0)
    with pytest.raises(ValueError):
        estimate_g_table(small_path, 50, 5, seed=0)


def test_estimate_g_accuracy(small_path):
    t = estimate_g_table(small_path, 50, 3000, seed=0)
    exact = exact_g(small_path, t.grid)
    mask = exact > 0.01 * exact.max()
    assert np.max(np.abs(t.g_raw[mask] / exact[mask] - 1)) < 0.15


def test_first_integral_left_endpoint_exponential():
    table = GTable.from_function(lambda b: np.exp(2 * b), 1000)
    b = de_solve(table, 1000).betas
    inv = np.diff(b) ** 2 * np.exp(2 * b[:-1])
    assert np.ptp(inv) / np.mean(inv) < 0.02


@pytest.mark.parametrize("k", [10, 100, 1000, 5000])
def test_de_solve_noisy_estimated_table(k):
    # few chains and light smoothing leave kinks in dlog_g at every grid node
    path = random_path(8, 6, seed=5, scale=0.6)
    table = dlog_g(smooth(estimate_g_table(path, 500, 40, seed=2), 2))
    s = de_solve(table, k)
    assert np.max(np.abs(s.betas - quadrature_schedule(table, k).betas)) < 2e-3
