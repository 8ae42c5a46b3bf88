"""Synthetic data generation from the full data-generating process.

Draws follow the same state recursions the filter applies: copula samples are
quantile-transformed through the conditional marginals, innovations feed the
variance recursion and standardized-residual products feed the latent
dependence recursion. Feeding the output back through the filter with the
same seeds reproduces the simulated variance and dependence paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import copula as cop
from . import marginals
from .errors import ValidationError
from .meanvol import vecm_mean
from .modelspec import ModelSpec, ParameterSet
from .panel import Panel


@dataclass
class SimulationResult:
    panel: Panel
    mu: np.ndarray
    sigma2: np.ndarray
    eps: np.ndarray
    z: np.ndarray
    latent: np.ndarray
    corr: np.ndarray
    sigma2_init: np.ndarray
    latent_init: np.ndarray
    seed: object
    x0: np.ndarray

    def truth_to_json(self, path, spec: ModelSpec, params: ParameterSet) -> None:
        doc = {
            "schema_version": 1,
            "spec": spec.to_dict(),
            "params": params.to_dict(),
            "seed": self.seed,
            "x0": self.x0.tolist(),
            "sigma2_init": self.sigma2_init.tolist(),
            "latent_init": self.latent_init.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def stationary_inits(params: ParameterSet) -> tuple[np.ndarray, np.ndarray]:
    """Stationary-mean seeds for the variance and latent recursions."""
    sigma2 = np.array([g.unconditional_variance() for g in params.garch])
    c = params.copula
    if c.time_varying and c.pairs:
        latent = c.level / (1.0 - c.persistence)
    else:
        latent = c.latent_const.copy()
    return sigma2, latent


def simulate(spec: ModelSpec, params: ParameterSet, t_total: int, seed,
             x0: np.ndarray | None = None, labels: list[str] | None = None,
             start_date: str = "2015-01-01") -> SimulationResult:
    """Simulate ``t_total`` observations (the first two seed the lags)."""
    params.validate(spec)
    k = params.k
    if t_total < 3:
        raise ValidationError("need t_total >= 3 to simulate")
    x0 = np.full(k, 4.0) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (k,):
        raise ValidationError("x0 must be a K-vector")
    labels = labels or [f"x{i}" for i in range(k)]
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    sigma2_init, latent_init = stationary_inits(params)
    nus = np.array([m.nu for m in params.marginals])
    ncps = np.array([m.ncp for m in params.marginals])
    cpar = params.copula
    pairs = cop.pair_indices(k)
    omega = np.array([g.omega for g in params.garch])
    a_pos = np.array([g.alpha_pos for g in params.garch])
    a_neg = np.array([g.alpha_neg for g in params.garch])
    beta = np.array([g.beta_persist for g in params.garch])

    n_steps = t_total - 2
    x = np.empty((t_total, k))
    x[0] = x0
    x[1] = x0
    mu_path = np.empty((n_steps, k))
    s2_path = np.empty((n_steps, k))
    eps_path = np.empty((n_steps, k))
    z_path = np.empty((n_steps, k))
    lat_path = np.empty((n_steps, len(pairs)))
    corr_path = np.empty((n_steps, k, k))

    sigma2_prev = sigma2_init
    eps_prev = np.zeros(k)
    latent_prev = latent_init
    zz_prev = np.zeros(len(pairs))

    for t in range(n_steps):
        mu = vecm_mean(x[t + 1], x[t], params.vecm)
        pos = np.maximum(eps_prev, 0.0)
        neg = np.minimum(eps_prev, 0.0)
        sigma2 = omega + a_pos * pos**2 + a_neg * neg**2 + beta * sigma2_prev
        if cpar.time_varying and pairs:
            latent = cpar.level + cpar.persistence * latent_prev + cpar.reaction * zz_prev
        else:
            latent = latent_init
        corr = cop.correlation_from_latent(latent) if pairs else np.ones((1, 1))
        u = np.clip(cop.copula_sample(1, corr, cpar.dof, rng)[0], 1e-12, 1 - 1e-12)
        x_t = marginals.quantile_arr(u, mu, sigma2, nus, ncps)
        eps = x_t - mu
        z = eps / np.sqrt(sigma2)

        x[t + 2] = x_t
        mu_path[t] = mu
        s2_path[t] = sigma2
        eps_path[t] = eps
        z_path[t] = z
        lat_path[t] = latent
        corr_path[t] = corr
        sigma2_prev, eps_prev, latent_prev = sigma2, eps, latent
        zz_prev = np.array([z[i] * z[j] for i, j in pairs]) if pairs else zz_prev

    dates = np.busday_offset(np.datetime64(start_date, "D"), np.arange(t_total), roll="forward")
    panel = Panel(dates, x, labels, "log" if spec.log_scale else "levels")
    return SimulationResult(panel, mu_path, s2_path, eps_path, z_path, lat_path, corr_path,
                            sigma2_init, latent_init, seed, x0)


def default_params(spec: ModelSpec, k: int, target_corr: float = 0.4) -> ParameterSet:
    """A documented, stationary parameter set for demos and fixtures.

    Variance scale is calibrated to daily log-price increments; the latent
    dependence recursion is centered on ``target_corr`` for every pair.
    """
    from .meanvol import GarchParams, VecmParams
    from .modelspec import MarginalShape

    if spec.rank > 0:
        alpha = np.zeros((k, spec.rank))
        alpha[: spec.rank, : spec.rank] = -0.05 * np.eye(spec.rank)
        beta = np.vstack([np.eye(spec.rank), np.full((k - spec.rank, spec.rank), -0.9)])
    else:
        alpha = np.zeros((k, 0))
        beta = np.zeros((k, 0))
    gamma = 0.1 * np.eye(k) if spec.short_run else np.zeros((k, k))
    intercept = np.zeros(k) if spec.intercept else None
    vecm = VecmParams(alpha, beta, gamma, spec.rank, intercept)

    if spec.sigma_time_varying:
        if spec.leverage:
            garch = [GarchParams(2e-5, 0.04, 0.10, 0.88, True) for _ in range(k)]
        else:
            garch = [GarchParams(2e-5, 0.07, 0.07, 0.88, False) for _ in range(k)]
    else:
        garch = [GarchParams.constant(4e-4) for _ in range(k)]

    margs = [MarginalShape(nu=8.0, ncp=0.5 if spec.ncp else 0.0) for _ in range(k)]

    p = cop.n_pairs(k)
    lat = cop.unsquash(np.full(p, target_corr))
    if spec.rho_time_varying:
        persistence = np.full(p, 0.9)
        reaction = np.full(p, 0.04)
        level = lat * (1 - persistence) - reaction * target_corr
        copula = cop.CopulaParams(dof=8.0, time_varying=True, level=level,
                                  persistence=persistence, reaction=reaction)
    else:
        copula = cop.CopulaParams(dof=8.0, time_varying=False, latent_const=lat)
    return ParameterSet(vecm, garch, margs, copula)
