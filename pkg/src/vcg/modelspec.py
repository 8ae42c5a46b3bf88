"""Model configuration switches and the full parameter set.

The nested family is spanned by independent switches: cointegrating rank,
short-run dynamics on/off, time-varying vs constant variance, time-varying vs
constant dependence, leverage, skewed (non-central) marginals, and whether
the model runs on log-transformed data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .copula import CopulaParams, n_pairs
from .errors import ValidationError
from .meanvol import GarchParams, VecmParams


@dataclass(frozen=True)
class ModelSpec:
    rank: int = 0
    short_run: bool = True  # include the Gamma term; off + rank 0 = pure random walk
    sigma_time_varying: bool = True
    rho_time_varying: bool = True
    leverage: bool = False
    ncp: bool = False
    log_scale: bool = False
    intercept: bool = False

    def __post_init__(self):
        if self.rank < 0:
            raise ValidationError("rank must be nonnegative")

    @property
    def model_id(self) -> str:
        base = f"vecm{self.rank}" if (self.rank > 0 or self.short_run) else "rw"
        parts = [base, "st" if self.sigma_time_varying else "sc", "rt" if self.rho_time_varying else "rc"]
        if self.leverage:
            parts.append("lev")
        if self.ncp:
            parts.append("ncp")
        if self.log_scale:
            parts.append("log")
        return "-".join(parts)

    @classmethod
    def random_walk(cls, sigma_time_varying=False, rho_time_varying=False, **kw) -> "ModelSpec":
        return cls(rank=0, short_run=False, sigma_time_varying=sigma_time_varying,
                   rho_time_varying=rho_time_varying, **kw)

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "short_run": self.short_run,
            "sigma_time_varying": self.sigma_time_varying,
            "rho_time_varying": self.rho_time_varying,
            "leverage": self.leverage,
            "ncp": self.ncp,
            "log_scale": self.log_scale,
            "intercept": self.intercept,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class MarginalShape:
    """Per-series shape of the standardized marginal."""

    nu: float
    ncp: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.nu) and self.nu > 2):
            raise ValidationError("marginal nu must exceed 2")
        if not np.isfinite(self.ncp):
            raise ValidationError("marginal ncp must be finite")


@dataclass
class ParameterSet:
    vecm: VecmParams
    garch: list[GarchParams]
    marginals: list[MarginalShape]
    copula: CopulaParams

    def __post_init__(self):
        if len(self.garch) != self.k or len(self.marginals) != self.k:
            raise ValidationError("need one GARCH and one marginal block per series")

    @property
    def k(self) -> int:
        return self.vecm.k

    def validate(self, spec: ModelSpec) -> None:
        """Check consistency between the parameter set and the model switches."""
        k = self.k
        if spec.rank != self.vecm.rank:
            raise ValidationError("cointegrating rank differs between spec and parameters")
        if spec.rank > k:
            raise ValidationError("rank exceeds panel dimension")
        if not spec.short_run and np.any(self.vecm.gamma != 0):
            raise ValidationError("short-run matrix must be zero for this spec")
        if spec.intercept != (self.vecm.intercept is not None):
            raise ValidationError("intercept presence differs between spec and parameters")
        for gp in self.garch:
            if not spec.sigma_time_varying and (gp.alpha_pos or gp.alpha_neg or gp.beta_persist):
                raise ValidationError("constant-variance spec requires degenerate GARCH blocks")
            if not spec.leverage and gp.alpha_pos != gp.alpha_neg:
                raise ValidationError("leverage disabled requires alpha_pos == alpha_neg")
        if not spec.ncp and any(m.ncp != 0 for m in self.marginals):
            raise ValidationError("non-centrality disabled requires all ncp == 0")
        if spec.rho_time_varying != self.copula.time_varying:
            raise ValidationError("dependence dynamics differ between spec and parameters")
        if self.copula.pairs != n_pairs(k):
            raise ValidationError("copula block does not match the number of series pairs")

    def to_dict(self) -> dict:
        v = self.vecm
        return {
            "vecm": {
                "rank": v.rank,
                "alpha": v.alpha.tolist(),
                "beta": v.beta.tolist(),
                "gamma": v.gamma.tolist(),
                "intercept": None if v.intercept is None else v.intercept.tolist(),
            },
            "garch": [
                {
                    "omega": g.omega,
                    "alpha_pos": g.alpha_pos,
                    "alpha_neg": g.alpha_neg,
                    "beta_persist": g.beta_persist,
                    "leverage_enabled": g.leverage_enabled,
                }
                for g in self.garch
            ],
            "marginals": [{"nu": m.nu, "ncp": m.ncp} for m in self.marginals],
            "copula": {
                "dof": self.copula.dof,
                "time_varying": self.copula.time_varying,
                "level": self.copula.level.tolist(),
                "persistence": self.copula.persistence.tolist(),
                "reaction": self.copula.reaction.tolist(),
                "latent_const": self.copula.latent_const.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSet":
        v = d["vecm"]
        k = len(v["gamma"])
        vecm = VecmParams(
            np.array(v["alpha"], dtype=float).reshape(k, v["rank"]),
            np.array(v["beta"], dtype=float).reshape(k, v["rank"]),
            np.array(v["gamma"], dtype=float),
            v["rank"],
            None if v.get("intercept") is None else np.array(v["intercept"], dtype=float),
        )
        garch = [GarchParams(**g) for g in d["garch"]]
        marginals = [MarginalShape(**m) for m in d["marginals"]]
        c = d["copula"]
        copula = CopulaParams(
            dof=c["dof"],
            time_varying=c["time_varying"],
            level=np.array(c["level"], dtype=float),
            persistence=np.array(c["persistence"], dtype=float),
            reaction=np.array(c["reaction"], dtype=float),
            latent_const=np.array(c["latent_const"], dtype=float),
        )
        return cls(vecm, garch, marginals, copula)
