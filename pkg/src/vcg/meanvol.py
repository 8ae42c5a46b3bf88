"""Conditional mean (VECM) and conditional variance (asymmetric GARCH).

Both recursions are exposed as pure one-step updates plus a vectorized
filter over a whole panel. Sign-split shock coefficients give the variance
recursion its leverage asymmetry:

    sigma2_t = omega + alpha_pos * max(eps, 0)^2 + alpha_neg * min(eps, 0)^2
               + beta * sigma2_{t-1}
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import copula as cop
from .errors import NumericalError, ValidationError
from .panel import Panel


@dataclass
class VecmParams:
    """Error-correction mean parameters: Pi = alpha @ beta.T plus short-run Gamma."""

    alpha: np.ndarray  # K x r loadings
    beta: np.ndarray  # K x r cointegrating vectors, top r x r block = I
    gamma: np.ndarray  # K x K short-run matrix
    rank: int
    intercept: np.ndarray | None = None

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(len(self.gamma), self.rank)
        self.beta = np.asarray(self.beta, dtype=float).reshape(len(self.gamma), self.rank)
        self.gamma = np.asarray(self.gamma, dtype=float)
        k = self.gamma.shape[0]
        if self.gamma.shape != (k, k):
            raise ValidationError("gamma must be square")
        if not 0 <= self.rank <= k:
            raise ValidationError("rank must lie in {0..K}")
        if self.intercept is not None:
            self.intercept = np.asarray(self.intercept, dtype=float)
            if self.intercept.shape != (k,):
                raise ValidationError("intercept must be a K-vector")
        for arr in (self.alpha, self.beta, self.gamma):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("VECM parameters must be finite")

    @property
    def k(self) -> int:
        return self.gamma.shape[0]

    @property
    def pi(self) -> np.ndarray:
        if self.rank == 0:
            return np.zeros_like(self.gamma)
        return self.alpha @ self.beta.T

    @classmethod
    def random_walk(cls, k: int) -> "VecmParams":
        return cls(np.zeros((k, 0)), np.zeros((k, 0)), np.zeros((k, k)), 0)


@dataclass
class GarchParams:
    omega: float
    alpha_pos: float = 0.0
    alpha_neg: float = 0.0
    beta_persist: float = 0.0
    leverage_enabled: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValidationError("omega must be positive")
        if min(self.alpha_pos, self.alpha_neg, self.beta_persist) < 0:
            raise ValidationError("GARCH coefficients must be nonnegative")
        if max(self.alpha_pos, self.alpha_neg) + self.beta_persist >= 1:
            raise ValidationError("max(alpha_pos, alpha_neg) + beta must stay below 1")
        if not self.leverage_enabled and self.alpha_pos != self.alpha_neg:
            raise ValidationError("alpha_pos must equal alpha_neg when leverage is disabled")

    @classmethod
    def constant(cls, sigma2: float) -> "GarchParams":
        """Degenerate recursion holding the variance fixed at ``sigma2``."""
        return cls(omega=sigma2)

    def unconditional_variance(self) -> float:
        """Stationary variance under sign-symmetric innovations."""
        denom = 1.0 - (self.alpha_pos + self.alpha_neg) / 2.0 - self.beta_persist
        if denom <= 0:
            raise ValidationError("recursion is not covariance stationary")
        return self.omega / denom


@dataclass
class InitPolicy:
    """How the filter seeds its recursions.

    ``sigma2`` is either the string ``"sample"`` (variance of the first
    differences, per series) or an explicit K-vector. ``latent`` is either
    ``"presample"`` (difference correlations over the first
    ``presample_window`` rows, pulled back through the squash inverse) or an
    explicit per-pair vector. ``burn_in`` filtered steps are excluded from
    likelihood sums.
    """

    sigma2: object = "sample"
    latent: object = "presample"
    presample_window: int = 250
    burn_in: int = 10


@dataclass
class FilterState:
    """Everything the forecaster needs about the last filtered time step."""

    x_last: np.ndarray
    x_prev: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    eps: np.ndarray
    z: np.ndarray
    latent: np.ndarray
    corr: np.ndarray
    origin_date: np.datetime64
    labels: list[str] = field(default_factory=list)


@dataclass
class FilterResult:
    """Filtered paths for t = 3..T (row 0 of each array is t = 3)."""

    dates: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    eps: np.ndarray
    z: np.ndarray
    latent: np.ndarray
    corr: np.ndarray
    sigma2_init: np.ndarray = field(default=None, repr=False)
    latent_init: np.ndarray = field(default=None, repr=False)

    def end_state(self, panel: Panel) -> FilterState:
        return FilterState(
            x_last=panel.values[-1].copy(),
            x_prev=panel.values[-2].copy(),
            mu=self.mu[-1].copy(),
            sigma2=self.sigma2[-1].copy(),
            eps=self.eps[-1].copy(),
            z=self.z[-1].copy(),
            latent=self.latent[-1].copy(),
            corr=self.corr[-1].copy(),
            origin_date=panel.dates[-1],
            labels=list(panel.labels),
        )


def vecm_mean(x_prev: np.ndarray, x_prev2: np.ndarray, p: VecmParams) -> np.ndarray:
    """Conditional mean of x_t given the last two observations.

    mu_t = x_{t-1} + Pi x_{t-1} + Gamma (x_{t-1} - x_{t-2}); Pi and Gamma
    both zero reduces to a pure random walk.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    x_prev2 = np.asarray(x_prev2, dtype=float)
    if x_prev.shape[-1] != p.k or x_prev2.shape[-1] != p.k:
        raise ValidationError("observation dimension does not match the parameter set")
    mu = x_prev + x_prev @ p.pi.T + (x_prev - x_prev2) @ p.gamma.T
    if p.intercept is not None:
        mu = mu + p.intercept
    return mu


def garch_update(sigma2_prev, eps_prev, p: GarchParams):
    """One variance step; elementwise on arrays."""
    sigma2_prev = np.asarray(sigma2_prev, dtype=float)
    if np.any(sigma2_prev <= 0):
        raise ValidationError("previous variance must be positive")
    eps_prev = np.asarray(eps_prev, dtype=float)
    pos = np.maximum(eps_prev, 0.0)
    neg = np.minimum(eps_prev, 0.0)
    return p.omega + p.alpha_pos * pos**2 + p.alpha_neg * neg**2 + p.beta_persist * sigma2_prev


def _ar1_path(inputs: np.ndarray, coef: float, init: float) -> np.ndarray:
    """y_t = inputs_t + coef * y_{t-1} with y_0 seeded by ``init``."""
    out, _ = signal.lfilter([1.0], [1.0, -coef], inputs, zi=np.array([coef * init]))
    return out


def garch_path(eps_lagged: np.ndarray, p: GarchParams, sigma2_init: float) -> np.ndarray:
    """Variance path for a whole series given the lagged innovations."""
    pos = np.maximum(eps_lagged, 0.0)
    neg = np.minimum(eps_lagged, 0.0)
    inputs = p.omega + p.alpha_pos * pos**2 + p.alpha_neg * neg**2
    return _ar1_path(inputs, p.beta_persist, sigma2_init)


def latent_path(zz_lagged: np.ndarray, level, persistence, reaction, latent_init) -> np.ndarray:
    """Latent dependence paths; ``zz_lagged`` is (T', P) of lagged z products."""
    t, p = zz_lagged.shape
    out = np.empty((t, p))
    for j in range(p):
        inputs = level[j] + reaction[j] * zz_lagged[:, j]
        out[:, j] = _ar1_path(inputs, persistence[j], latent_init[j])
    return out


def default_sigma2_init(values: np.ndarray) -> np.ndarray:
    return np.var(np.diff(values, axis=0), axis=0, ddof=0)


def default_latent_init(values: np.ndarray, presample_window: int) -> np.ndarray:
    dx = np.diff(values, axis=0)
    w = min(presample_window, len(dx))
    k = values.shape[1]
    if k == 1:
        return np.zeros(0)
    c = np.corrcoef(dx[:w].T)
    rho = np.array([c[i, j] for i, j in cop.pair_indices(k)])
    rho = np.clip(rho, -0.98, 0.98)
    return cop.unsquash(rho)


def resolve_init(values: np.ndarray, init: InitPolicy) -> tuple[np.ndarray, np.ndarray]:
    k = values.shape[1]
    if isinstance(init.sigma2, str):
        if init.sigma2 != "sample":
            raise ValidationError(f"unknown sigma2 init {init.sigma2!r}")
        sigma2_init = default_sigma2_init(values)
    else:
        sigma2_init = np.asarray(init.sigma2, dtype=float)
        if sigma2_init.shape != (k,):
            raise ValidationError("explicit sigma2 init must be a K-vector")
    if isinstance(init.latent, str):
        if init.latent != "presample":
            raise ValidationError(f"unknown latent init {init.latent!r}")
        latent_init = default_latent_init(values, init.presample_window)
    else:
        latent_init = np.asarray(init.latent, dtype=float)
        if latent_init.shape != (cop.n_pairs(k),):
            raise ValidationError("explicit latent init must have one value per pair")
    if np.any(sigma2_init <= 0):
        raise ValidationError("initial variances must be positive")
    return sigma2_init, latent_init


def filter_pass(panel: Panel, spec, params, init: InitPolicy | None = None) -> FilterResult:
    """Run the mean/variance/dependence recursions over a panel.

    Emits states for t = 3..T (the first two observations are consumed as
    lags). Standardized residuals are z = (x - mu) / sigma, and the latent
    dependence recursion is driven by their lagged pairwise products with the
    pre-sample products set to zero.
    """
    init = init or InitPolicy()
    x = panel.values
    t_total, k = x.shape
    if t_total < 3:
        raise ValidationError("filter needs at least 3 observations")

    sigma2_init, latent_init = resolve_init(x, init)

    x1 = x[1:-1]  # x_{t-1}
    dx1 = x[1:-1] - x[:-2]  # x_{t-1} - x_{t-2}
    vecm = params.vecm
    mu = x1 + x1 @ vecm.pi.T + dx1 @ vecm.gamma.T
    if vecm.intercept is not None:
        mu = mu + vecm.intercept
    eps = x[2:] - mu

    n_steps = t_total - 2
    sigma2 = np.empty((n_steps, k))
    for i, gp in enumerate(params.garch):
        eps_lagged = np.concatenate(([0.0], eps[:-1, i]))
        sigma2[:, i] = garch_path(eps_lagged, gp, sigma2_init[i])
    if np.any(sigma2 <= 0) or not np.all(np.isfinite(sigma2)):
        bad = int(np.argwhere((sigma2 <= 0) | ~np.isfinite(sigma2))[0][0])
        raise NumericalError(f"variance path became invalid at t={bad + 3}")
    z = eps / np.sqrt(sigma2)

    pairs = cop.pair_indices(k)
    cpar = params.copula
    if cpar.time_varying and pairs:
        zz = np.stack([z[:, i] * z[:, j] for i, j in pairs], axis=1)
        zz_lagged = np.vstack([np.zeros((1, len(pairs))), zz[:-1]])
        latent = latent_path(zz_lagged, cpar.level, cpar.persistence, cpar.reaction, latent_init)
    elif pairs:
        latent = np.tile(cpar.latent_const, (n_steps, 1))
    else:
        latent = np.zeros((n_steps, 0))
    if not np.all(np.isfinite(latent)):
        bad = int(np.argwhere(~np.isfinite(latent))[0][0])
        raise NumericalError(f"latent dependence path became non-finite at t={bad + 3}")

    if pairs:
        if cpar.time_varying:
            corr = cop.correlation_from_latent(latent)
        else:
            corr = np.broadcast_to(cop.correlation_from_latent(latent[0]), (n_steps, k, k)).copy()
    else:
        corr = np.ones((n_steps, 1, 1))

    return FilterResult(
        dates=panel.dates[2:],
        mu=mu,
        sigma2=sigma2,
        eps=eps,
        z=z,
        latent=latent,
        corr=corr,
        sigma2_init=sigma2_init,
        latent_init=latent_init,
    )
