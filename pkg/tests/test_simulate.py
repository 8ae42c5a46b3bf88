"""The synthetic data-generating process."""

import json

import numpy as np
import pytest
from scipy.stats import chi2

from vcg import InitPolicy, ModelSpec, ParameterSet, ValidationError, default_params, filter_pass, simulate


def ljung_box_stat(x, lags):
    """Portmanteau statistic and chi-square p-value for serial correlation."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    xc = x - x.mean()
    denom = float(xc @ xc)
    q = 0.0
    for k in range(1, lags + 1):
        r_k = float(xc[k:] @ xc[:-k]) / denom
        q += r_k * r_k / (n - k)
    q *= n * (n + 2)
    return q, 1.0 - chi2.cdf(q, lags)


def test_simulate_deterministic():
    spec = ModelSpec.random_walk()
    params = default_params(spec, 2)
    a = simulate(spec, params, 10, seed=1)
    b = simulate(spec, params, 10, seed=1)
    np.testing.assert_array_equal(a.panel.values, b.panel.values)
    assert a.panel.shape == (10, 2)
    c = simulate(spec, params, 10, seed=2)
    assert not np.array_equal(a.panel.values, c.panel.values)


def test_simulate_filter_roundtrip_full_model():
    spec = ModelSpec(rank=0, short_run=True, sigma_time_varying=True,
                     rho_time_varying=True, leverage=True)
    params = default_params(spec, 2)
    sim = simulate(spec, params, 500, seed=6)
    fr = filter_pass(sim.panel, spec, params,
                     InitPolicy(sigma2=sim.sigma2_init, latent=sim.latent_init))
    assert np.abs(fr.sigma2 - sim.sigma2).max() < 1e-10
    assert np.abs(fr.mu - sim.mu).max() < 1e-10


def test_simulate_iid_differences_pass_ljung_box():
    # no mean dynamics, constant variance and dependence: increments are iid
    spec = ModelSpec.random_walk()
    params = default_params(spec, 2)
    sim = simulate(spec, params, 1500, seed=14)
    dx = np.diff(sim.panel.values, axis=0)
    for i in range(2):
        _, pval = ljung_box_stat(dx[:, i], lags=10)
        assert pval > 0.01


def test_simulate_garch_dependence_fails_ljung_box_on_squares():
    # sanity check of the oracle itself: squared increments of a GARCH path
    # are serially correlated
    spec = ModelSpec.random_walk(sigma_time_varying=True)
    params = default_params(spec, 2)
    sim = simulate(spec, params, 3000, seed=15)
    dx2 = np.diff(sim.panel.values, axis=0)[:, 0] ** 2
    _, pval = ljung_box_stat(dx2, lags=10)
    assert pval < 0.01


def test_simulate_log_scale_tag():
    spec = ModelSpec.random_walk(log_scale=True)
    params = default_params(spec, 2)
    sim = simulate(spec, params, 50, seed=3)
    assert sim.panel.transform_tag == "log"


def test_simulate_truth_json(tmp_path):
    spec = ModelSpec.random_walk(sigma_time_varying=True)
    params = default_params(spec, 2)
    sim = simulate(spec, params, 60, seed=8)
    path = tmp_path / "truth.json"
    sim.truth_to_json(path, spec, params)
    doc = json.loads(path.read_text())
    assert doc["seed"] == 8
    back = ParameterSet.from_dict(doc["params"])
    assert back.garch[0].omega == params.garch[0].omega
    np.testing.assert_allclose(doc["sigma2_init"], sim.sigma2_init)
    assert ModelSpec.from_dict(doc["spec"]) == spec


def test_simulate_validates_inputs():
    spec = ModelSpec.random_walk()
    params = default_params(spec, 2)
    with pytest.raises(ValidationError):
        simulate(spec, params, 2, seed=0)
    with pytest.raises(ValidationError):
        simulate(spec, params, 50, seed=0, x0=np.zeros(3))


def test_default_params_validate_across_specs():
    for spec in [
        ModelSpec.random_walk(),
        ModelSpec.random_walk(sigma_time_varying=True, rho_time_varying=True),
        ModelSpec(rank=2, sigma_time_varying=True, rho_time_varying=True, leverage=True, ncp=True),
        ModelSpec(rank=0, short_run=True, sigma_time_varying=False, rho_time_varying=True, log_scale=True),
    ]:
        params = default_params(spec, 4)
        params.validate(spec)
        sim = simulate(spec, params, 20, seed=0)
        assert np.all(np.isfinite(sim.panel.values))
