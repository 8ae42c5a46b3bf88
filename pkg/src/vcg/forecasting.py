"""Simulation-based multi-step probabilistic forecasting.

Each step draws ``n`` copula samples at the current dependence state and maps
them through the per-series marginal quantile functions at the current
conditional means and variances. States are then rolled forward either from
the ensemble-mean point forecast (``point-update``, the default) or
per-trajectory from each trajectory's own draw (``per-trajectory``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import copula as cop
from . import marginals
from .errors import NumericalError, ValidationError
from .meanvol import FilterState, vecm_mean
from .modelspec import ModelSpec, ParameterSet
from .panel import cap_exponentiated

MODES = ("point-update", "per-trajectory")


@dataclass
class ForecastEnsemble:
    """n x h x K simulated trajectories from one forecast origin."""

    trajectories: np.ndarray
    origin_date: np.datetime64
    spec: ModelSpec
    seed: object
    labels: list[str]
    scale: str = "model"  # "model" (fit scale) or "levels" (after exp + cap)
    cap_applied: int = 0

    def __post_init__(self):
        self.trajectories = np.asarray(self.trajectories, dtype=float)
        if self.trajectories.ndim != 3 or self.trajectories.shape[0] < 1:
            raise ValidationError("trajectories must be (n, h, K) with n >= 1")

    @property
    def n(self) -> int:
        return self.trajectories.shape[0]

    @property
    def horizon(self) -> int:
        return self.trajectories.shape[1]

    def to_levels(self, cap: float, log_scale: bool) -> "ForecastEnsemble":
        """Exponentiate log-scale trajectories and clamp; count replacements."""
        if self.scale == "levels":
            return self
        if not log_scale:
            return ForecastEnsemble(self.trajectories, self.origin_date, self.spec,
                                    self.seed, self.labels, "levels", 0)
        with np.errstate(over="ignore"):
            raw = np.exp(self.trajectories)
        capped, count = cap_exponentiated(raw, cap)
        return ForecastEnsemble(capped, self.origin_date, self.spec, self.seed,
                                self.labels, "levels", count)

    def to_csv(self, path) -> None:
        n, h, k = self.trajectories.shape
        idx = pd.MultiIndex.from_product(
            [range(n), range(1, h + 1), self.labels], names=["trajectory", "step", "series"]
        )
        df = pd.DataFrame({"value": self.trajectories.ravel()}, index=idx).reset_index()
        df.insert(0, "origin", str(self.origin_date))
        compression = {"method": "gzip", "mtime": 0} if str(path).endswith(".gz") else "infer"
        df.to_csv(path, index=False, float_format="%.17g", compression=compression)

    @classmethod
    def from_csv(cls, path, spec: ModelSpec | None = None, scale: str = "model") -> "ForecastEnsemble":
        df = pd.read_csv(path)
        labels = list(dict.fromkeys(df["series"]))
        n = int(df["trajectory"].max()) + 1
        h = int(df["step"].max())
        values = df["value"].to_numpy().reshape(n, h, len(labels))
        origin = np.datetime64(df["origin"].iloc[0], "D")
        return cls(values, origin, spec or ModelSpec(), None, labels, scale)


@dataclass
class ForecastSummary:
    probs: np.ndarray
    mean: np.ndarray  # (h, K)
    quantiles: np.ndarray  # (len(probs), h, K)
    labels: list[str]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "probs": self.probs.tolist(),
            "labels": self.labels,
            "mean": self.mean.tolist(),
            "quantiles": self.quantiles.tolist(),
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _garch_arrays(params: ParameterSet):
    g = params.garch
    return (np.array([x.omega for x in g]), np.array([x.alpha_pos for x in g]),
            np.array([x.alpha_neg for x in g]), np.array([x.beta_persist for x in g]))


def _step_variance(sigma2, eps, omega, a_pos, a_neg, beta):
    pos = np.maximum(eps, 0.0)
    neg = np.minimum(eps, 0.0)
    return omega + a_pos * pos**2 + a_neg * neg**2 + beta * sigma2


def _zz(z: np.ndarray, pairs) -> np.ndarray:
    return np.stack([z[..., i] * z[..., j] for i, j in pairs], axis=-1) if pairs else z[..., :0]


def forecast(state: FilterState, params: ParameterSet, spec: ModelSpec, horizon: int,
             n: int, seed, mode: str = "point-update") -> ForecastEnsemble:
    """Simulate ``n`` trajectories ``horizon`` steps ahead of ``state``.

    Trajectories are produced on the model scale (log scale for log-scale
    specs); use :meth:`ForecastEnsemble.to_levels` before evaluating against
    price levels. Deterministic for a fixed ``seed``.
    """
    if horizon < 1 or n < 1:
        raise ValidationError("horizon and n must be at least 1")
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    params.validate(spec)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    k = len(state.x_last)
    pairs = cop.pair_indices(k)
    nus = np.array([m.nu for m in params.marginals])
    ncps = np.array([m.ncp for m in params.marginals])
    omega, a_pos, a_neg, beta = _garch_arrays(params)
    cpar = params.copula

    # roll the end-of-sample state one step forward to the first forecast step
    mu = vecm_mean(state.x_last, state.x_prev, params.vecm)
    sigma2 = _step_variance(state.sigma2, state.eps, omega, a_pos, a_neg, beta)
    if cpar.time_varying and pairs:
        latent = cpar.level + cpar.persistence * state.latent + cpar.reaction * _zz(state.z, pairs)
    else:
        latent = state.latent.copy()

    out = np.empty((n, horizon, k))
    per_traj = mode == "per-trajectory"
    if per_traj:
        mu = np.tile(mu, (n, 1))
        sigma2 = np.tile(sigma2, (n, 1))
        if cpar.time_varying:
            latent = np.tile(latent, (n, 1))
        x_last = np.tile(state.x_last, (n, 1))
    else:
        x_last = state.x_last.copy()

    for s in range(horizon):
        if pairs:
            if per_traj and cpar.time_varying:
                corr = cop.correlation_from_latent(latent)
                u = cop.sample_from_correlations(corr, cpar.dof, rng)
            else:
                corr = cop.correlation_from_latent(latent)
                u = cop.copula_sample(n, corr, cpar.dof, rng)
        else:
            u = rng.random((n, 1))
        u = np.clip(u, 1e-12, 1.0 - 1e-12)
        x_step = marginals.quantile_arr(u, mu, sigma2, nus, ncps)
        if not np.all(np.isfinite(x_step)):
            raise NumericalError(f"forecast state became non-finite at step {s + 1}")
        out[:, s, :] = x_step
        if s == horizon - 1:
            break
        if per_traj:
            eps = x_step - mu
            z = eps / np.sqrt(sigma2)
            mu = vecm_mean(x_step, x_last, params.vecm)
            sigma2 = _step_variance(sigma2, eps, omega, a_pos, a_neg, beta)
            if cpar.time_varying and pairs:
                latent = cpar.level + cpar.persistence * latent + cpar.reaction * _zz(z, pairs)
            x_last = x_step
        else:
            x_bar = x_step.mean(axis=0)
            eps = x_bar - mu
            z = eps / np.sqrt(sigma2)
            mu = vecm_mean(x_bar, x_last, params.vecm)
            sigma2 = _step_variance(sigma2, eps, omega, a_pos, a_neg, beta)
            if cpar.time_varying and pairs:
                latent = cpar.level + cpar.persistence * latent + cpar.reaction * _zz(z, pairs)
            x_last = x_bar

    labels = list(state.labels) if state.labels else [f"x{i}" for i in range(k)]
    return ForecastEnsemble(out, state.origin_date, spec, seed, labels)


def summarize(ensemble: ForecastEnsemble, probs) -> ForecastSummary:
    """Empirical mean and quantiles per (step, series)."""
    probs = np.asarray(probs, dtype=float)
    if probs.size == 0 or np.any((probs <= 0) | (probs >= 1)):
        raise ValidationError("quantile probabilities must lie strictly inside (0, 1)")
    if ensemble.n < 1:
        raise ValidationError("empty ensemble")
    order = np.argsort(probs)
    probs = probs[order]
    q = np.quantile(ensemble.trajectories, probs, axis=0)
    return ForecastSummary(probs, ensemble.trajectories.mean(axis=0), q, ensemble.labels)


def correlation_path(states) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Off-diagonal correlation entries per time step.

    ``states`` is an (N, K, K) stack or a sequence of DependenceState.
    Returns an (N, P) array in upper-triangle pair order plus the pairs.
    """
    if hasattr(states, "ndim"):
        corr = np.asarray(states, dtype=float)
    else:
        if not len(states):
            raise ValidationError("no dependence states given")
        corr = np.stack([s.corr for s in states])
    k = corr.shape[-1]
    pairs = cop.pair_indices(k)
    path = np.stack([corr[:, i, j] for i, j in pairs], axis=1) if pairs else corr[:, :0, 0]
    return path, pairs
