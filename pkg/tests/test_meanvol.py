"""Error-correction mean and asymmetric variance recursions."""

import numpy as np
import pytest

from vcg import (
    GarchParams,
    InitPolicy,
    ModelSpec,
    ValidationError,
    VecmParams,
    default_params,
    filter_pass,
    garch_update,
    simulate,
    vecm_mean,
)
from vcg.meanvol import garch_path


def test_vecm_mean_random_walk():
    p = VecmParams.random_walk(2)
    x = np.array([3.1, -0.7])
    np.testing.assert_allclose(vecm_mean(x, np.array([1.0, 1.0]), p), x)


def test_vecm_mean_short_run_only():
    p = VecmParams(np.zeros((1, 0)), np.zeros((1, 0)), np.array([[0.5]]), 0)
    mu = vecm_mean(np.array([2.0]), np.array([1.0]), p)
    np.testing.assert_allclose(mu, [2.5])


def test_vecm_mean_error_correction_matrix_oracle():
    # K=2, r=1 example: Pi = alpha @ beta.T applied to x = (2, 1)
    alpha = np.array([[-0.1], [0.0]])
    beta = np.array([[1.0], [-1.0]])
    p = VecmParams(alpha, beta, np.zeros((2, 2)), 1)
    x = np.array([2.0, 1.0])
    mu = vecm_mean(x, x, p)
    pi = alpha @ beta.T
    np.testing.assert_allclose(mu, x + pi @ x, atol=1e-15)
    np.testing.assert_allclose(mu, [1.9, 1.0], atol=1e-15)


def test_vecm_mean_rank_k_matches_var2_companion():
    # full rank with beta = I is an unrestricted VAR(2) in levels:
    # x_t = (I + Pi + Gamma) x_{t-1} - Gamma x_{t-2}
    rng = np.random.default_rng(42)
    k = 3
    alpha = rng.normal(scale=0.2, size=(k, k))
    gamma = rng.normal(scale=0.2, size=(k, k))
    p = VecmParams(alpha, np.eye(k), gamma, k)
    x1 = rng.normal(size=k)
    x2 = rng.normal(size=k)
    a1 = np.eye(k) + alpha + gamma  # companion-form coefficient on x_{t-1}
    a2 = -gamma
    np.testing.assert_allclose(vecm_mean(x1, x2, p), a1 @ x1 + a2 @ x2, rtol=1e-12)


def test_vecm_mean_dimension_mismatch():
    p = VecmParams.random_walk(2)
    with pytest.raises(ValidationError):
        vecm_mean(np.zeros(3), np.zeros(3), p)


def test_garch_update_arithmetic():
    p = GarchParams(0.1, 0.05, 0.10, 0.8, leverage_enabled=True)
    assert garch_update(1.0, -1.0, p) == pytest.approx(1.00)
    assert garch_update(1.0, 1.0, p) == pytest.approx(0.95)
    assert garch_update(1.0, 0.0, p) == pytest.approx(0.90)


def test_garch_update_floor_and_monotonicity():
    p = GarchParams(0.2, 0.1, 0.1, 0.5)
    rng = np.random.default_rng(0)
    for _ in range(100):
        s2 = rng.uniform(0.01, 5.0)
        e = rng.normal()
        assert garch_update(s2, e, p) >= p.omega
    eps = np.array([0.5, 1.0, 2.0])
    vals = garch_update(1.0, eps, p)
    assert np.all(np.diff(vals) > 0)


def test_garch_update_sign_invariant_without_leverage():
    p = GarchParams(0.05, 0.08, 0.08, 0.9)
    assert garch_update(2.0, 1.3, p) == garch_update(2.0, -1.3, p)


def test_garch_params_validation():
    with pytest.raises(ValidationError):
        GarchParams(-0.1, 0.05, 0.05, 0.8)
    with pytest.raises(ValidationError):
        GarchParams(0.1, 0.3, 0.1, 0.8, leverage_enabled=True)  # max(a)+b >= 1
    with pytest.raises(ValidationError):
        GarchParams(0.1, 0.05, 0.07, 0.8)  # unequal alphas need leverage


def test_garch_unconditional_variance_long_path():
    # simulated long path has the stationary mean omega / (1 - alpha - beta)
    p = GarchParams(0.2, 0.1, 0.1, 0.7)
    rng = np.random.default_rng(8)
    t_len = 200_000
    eps = np.empty(t_len)
    s2 = np.empty(t_len)
    s2_prev, eps_prev = p.unconditional_variance(), 0.0
    for t in range(t_len):
        s2[t] = garch_update(s2_prev, eps_prev, p)
        eps[t] = rng.standard_normal() * np.sqrt(s2[t])
        s2_prev, eps_prev = s2[t], eps[t]
    assert s2.mean() == pytest.approx(p.unconditional_variance(), rel=0.05)
    assert p.unconditional_variance() == pytest.approx(0.2 / (1 - 0.1 - 0.7), rel=1e-14)


def test_garch_path_matches_stepwise_updates():
    p = GarchParams(0.3, 0.12, 0.05, 0.6, leverage_enabled=True)
    rng = np.random.default_rng(2)
    eps_lagged = rng.normal(size=50)
    path = garch_path(eps_lagged, p, 1.7)
    s2, manual = 1.7, []
    for e in eps_lagged:
        s2 = garch_update(s2, e, p)
        manual.append(s2)
    np.testing.assert_allclose(path, manual, rtol=1e-12)


def test_filter_constant_variance_spec():
    spec = ModelSpec.random_walk()  # constant sigma, constant rho
    params = default_params(spec, 2)
    sim = simulate(spec, params, 100, seed=1)
    fr = filter_pass(sim.panel, spec, params)
    assert np.ptp(fr.sigma2, axis=0).max() == 0.0
    np.testing.assert_allclose(fr.sigma2[0], [g.omega for g in params.garch])


def test_filter_rw_innovations_are_differences():
    spec = ModelSpec.random_walk(sigma_time_varying=True)
    params = default_params(spec, 2)
    sim = simulate(spec, params, 120, seed=3)
    fr = filter_pass(sim.panel, spec, params)
    dx = np.diff(sim.panel.values, axis=0)[1:]
    np.testing.assert_allclose(fr.eps, dx, atol=1e-14)


def test_filter_matches_simulator_paths():
    # simulate-then-filter roundtrip for the full time-varying model
    spec = ModelSpec(rank=1, sigma_time_varying=True, rho_time_varying=True, leverage=True, ncp=True)
    params = default_params(spec, 3)
    sim = simulate(spec, params, 400, seed=17)
    init = InitPolicy(sigma2=sim.sigma2_init, latent=sim.latent_init)
    fr = filter_pass(sim.panel, spec, params, init)
    assert np.abs(fr.sigma2 - sim.sigma2).max() < 1e-10
    assert np.abs(fr.latent - sim.latent).max() < 1e-10
    assert np.abs(fr.corr - sim.corr).max() < 1e-10
    assert np.abs(fr.z - sim.z).max() < 1e-10


def test_filter_needs_three_observations():
    spec = ModelSpec.random_walk()
    params = default_params(spec, 2)
    panel = simulate(spec, params, 50, seed=0).panel.window(0, 2)
    with pytest.raises(ValidationError):
        filter_pass(panel, spec, params)


def test_filter_end_state_consistency():
    spec = ModelSpec.random_walk(sigma_time_varying=True, rho_time_varying=True)
    params = default_params(spec, 2)
    sim = simulate(spec, params, 200, seed=9)
    fr = filter_pass(sim.panel, spec, params)
    state = fr.end_state(sim.panel)
    np.testing.assert_allclose(state.x_last, sim.panel.values[-1])
    np.testing.assert_allclose(state.sigma2, fr.sigma2[-1])
    assert state.labels == sim.panel.labels
    assert state.origin_date == sim.panel.dates[-1]
