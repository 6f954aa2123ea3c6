import math

import numpy as np
import pytest

from varopt_ais.model import GeometricPath, RbmParams, dlog_pstar_dbeta, softplus
from varopt_ais.oracle import (EnumerationTooLarge, all_states, exact_g,
                               exact_log_probs, exact_log_z, exact_var_log_ratio)

from conftest import random_path, random_rbm


def test_all_states_order():
    np.testing.assert_array_equal(all_states(2), [[0, 0], [0, 1], [1, 0], [1, 1]])


def test_log_z_zero_params():
    s = exact_log_z(RbmParams.zeros(2, 3))
    assert s.log_z == pytest.approx(5 * math.log(2), abs=1e-12)
    assert s.model_dims == (2, 3)


def test_log_z_single_pair():
    s = exact_log_z(RbmParams([[1.0]], [0.0], [0.0]))
    assert s.log_z == pytest.approx(math.log(3 + math.e), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_hidden_and_visible_enumeration_agree(seed):
    params = random_rbm(6, 5, seed)
    h = exact_log_z(params, method="enumerate_hidden").log_z
    v = exact_log_z(params, method="enumerate_visible").log_z
    assert abs(h - v) < 1e-10


def test_automatic_method_picks_smaller_layer():
    assert exact_log_z(random_rbm(8, 3, 0)).method == "enumerate_hidden"
    assert exact_log_z(random_rbm(3, 8, 0)).method == "enumerate_visible"


def test_chunked_enumeration_matches_direct():
    params = random_rbm(3, 16, 4, scale=0.3)
    assert abs(exact_log_z(params, method="enumerate_hidden").log_z
               - exact_log_z(params, method="enumerate_visible").log_z) < 1e-10


def test_cap_refusal():
    with pytest.raises(EnumerationTooLarge):
        exact_log_z(random_rbm(22, 21, 0, scale=0.01))


def test_base_log_z_closed_form():
    bias = np.array([0.3, -1.2, 2.0, 0.0])
    path = GeometricPath.from_target(random_rbm(4, 3, 0), bias)
    closed = 3 * math.log(2) + softplus(bias).sum()
    assert abs(exact_log_z(path.base).log_z - closed) < 1e-12
    assert abs(path.log_z_base() - closed) < 1e-12


def test_exact_log_probs_normalized(small_path):
    for beta in (0.0, 0.4, 1.0):
        assert np.exp(exact_log_probs(small_path, beta)).sum() == pytest.approx(1.0)


def test_exact_log_probs_endpoint_matches_target_log_z(small_path):
    # log p_1(v) = log p*_B(v) - log Z_B
    from varopt_ais.model import log_pstar
    states = all_states(6)
    expected = log_pstar(states, small_path.target) - exact_log_z(small_path.target).log_z
    np.testing.assert_allclose(exact_log_probs(small_path, 1.0), expected, atol=1e-12)


def test_exact_g_zero_for_identical_models():
    target = RbmParams(np.zeros((2, 4)), np.zeros(2), [0.1, 0.2, -0.3, 1.0])
    path = GeometricPath(target, target)
    np.testing.assert_allclose(exact_g(path, np.linspace(0, 1, 5)), 0.0, atol=1e-20)


def test_exact_g_nonnegative_and_vectorized(small_path):
    betas = np.linspace(0, 1, 21)
    g = exact_g(small_path, betas)
    assert g.shape == betas.shape and np.all(g >= 0)
    assert exact_g(small_path, 0.35) == pytest.approx(exact_g(small_path, [0.35])[0])


def test_exact_g_matches_weighted_variance_by_hand(tiny_path):
    states = all_states(3)
    p = np.exp(exact_log_probs(tiny_path, 0.3))
    d = dlog_pstar_dbeta(states, 0.3, tiny_path)
    assert exact_g(tiny_path, 0.3) == pytest.approx(p @ d ** 2 - (p @ d) ** 2, rel=1e-10)


def test_exact_g_is_continuous(small_path):
    betas = np.linspace(0, 1 - 1e-4, 41)
    g0 = exact_g(small_path, betas)
    g1 = exact_g(small_path, betas + 1e-4)
    # derivative bound from a coarse finite-difference scan
    fine = np.linspace(0, 1, 401)
    slope = np.max(np.abs(np.diff(exact_g(small_path, fine)) / np.diff(fine)))
    assert np.all(np.abs(g1 - g0) <= 2 * slope * 1e-4 + 1e-12)


def test_var_log_ratio_zero_for_equal_betas(small_path):
    assert exact_var_log_ratio(small_path, 0.3, 0.3) == 0.0


def test_visible_cap_refusal():
    path = GeometricPath.from_target(random_rbm(17, 2, 0))
    with pytest.raises(EnumerationTooLarge):
        exact_g(path, 0.5)
