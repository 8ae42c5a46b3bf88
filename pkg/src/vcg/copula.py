"""t-copula with GARCH-style latent dynamics for the pairwise dependence.

Each pair (i, j) carries a latent state updated from the lagged product of
standardized residuals,

    latent_t = level + persistence * latent_{t-1} + reaction * z_i * z_j,

and the correlation matrix is obtained by squashing the latent values into
(-1, 1), assembling a unit-diagonal symmetric matrix and repairing it to be
positive definite by flooring its eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ValidationError

RHO_BOUND = 0.999  # squash range for pairwise correlations
MIN_EIGENVALUE = 1e-5  # floor applied during the PSD repair
DOF_MAX = 400.0  # beyond this the t-copula is numerically Gaussian


def pair_indices(k: int) -> list[tuple[int, int]]:
    """Upper-triangle pair order (0,1), (0,2), ..., (k-2, k-1)."""
    return [(i, j) for i in range(k) for j in range(i + 1, k)]


def n_pairs(k: int) -> int:
    return k * (k - 1) // 2


@dataclass
class CopulaParams:
    """Copula block of the parameter set.

    With ``time_varying`` the per-pair recursion coefficients drive the latent
    states; otherwise ``latent_const`` holds one fixed latent value per pair.
    """

    dof: float
    time_varying: bool
    level: np.ndarray = field(default_factory=lambda: np.zeros(0))
    persistence: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reaction: np.ndarray = field(default_factory=lambda: np.zeros(0))
    latent_const: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.level = np.atleast_1d(np.asarray(self.level, dtype=float))
        self.persistence = np.atleast_1d(np.asarray(self.persistence, dtype=float))
        self.reaction = np.atleast_1d(np.asarray(self.reaction, dtype=float))
        self.latent_const = np.atleast_1d(np.asarray(self.latent_const, dtype=float))
        if not (np.isfinite(self.dof) and self.dof > 2):
            raise ValidationError("copula dof must exceed 2")
        if self.time_varying:
            if not (len(self.level) == len(self.persistence) == len(self.reaction)):
                raise ValidationError("copula recursion coefficient arrays must share length")
            if np.any(np.abs(self.persistence) >= 1):
                raise ValidationError("latent persistence must satisfy |persistence| < 1")
        for arr in (self.level, self.persistence, self.reaction, self.latent_const):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("copula parameters must be finite")

    @property
    def pairs(self) -> int:
        return len(self.latent_const) if not self.time_varying else len(self.level)


@dataclass
class DependenceState:
    """Latent pairwise states and the correlation matrix they imply."""

    latent: np.ndarray
    corr: np.ndarray

    def __post_init__(self):
        self.latent = np.asarray(self.latent, dtype=float)
        self.corr = np.asarray(self.corr, dtype=float)
        k = self.corr.shape[0]
        if self.corr.shape != (k, k) or len(self.latent) != n_pairs(k):
            raise ValidationError("latent length inconsistent with corr shape")
        if not np.allclose(self.corr, self.corr.T, atol=1e-12):
            raise ValidationError("corr must be symmetric")
        if not np.allclose(np.diag(self.corr), 1.0, atol=1e-12):
            raise ValidationError("corr must have unit diagonal")
        if np.linalg.eigvalsh(self.corr)[0] < MIN_EIGENVALUE - 1e-12:
            raise ValidationError("corr minimum eigenvalue below floor")


def latent_update(prev, z_i, z_j, level, persistence, reaction):
    """One recursion step; works elementwise on arrays."""
    return level + persistence * np.asarray(prev) + reaction * np.asarray(z_i) * np.asarray(z_j)


def squash(latent):
    """Map latent values into (-RHO_BOUND, RHO_BOUND)."""
    return RHO_BOUND * np.tanh(np.asarray(latent, dtype=float))


def unsquash(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) >= RHO_BOUND):
        raise ValidationError(f"correlation outside the (-{RHO_BOUND}, {RHO_BOUND}) squash range")
    return np.arctanh(rho / RHO_BOUND)


def _assemble(rho_flat: np.ndarray, k: int) -> np.ndarray:
    """Stack (..., P) squashed values into (..., K, K) unit-diagonal matrices."""
    lead = rho_flat.shape[:-1]
    out = np.zeros(lead + (k, k))
    iu = np.triu_indices(k, 1)
    out[..., iu[0], iu[1]] = rho_flat
    out = out + np.swapaxes(out, -1, -2)
    out[..., np.arange(k), np.arange(k)] = 1.0
    return out


def _repair(mats: np.ndarray) -> np.ndarray:
    """Floor eigenvalues at MIN_EIGENVALUE, rescale to unit diagonal.

    A final blend toward the identity guarantees the floor exactly even after
    the diagonal rescaling.
    """
    w, v = np.linalg.eigh(mats)
    need = w[..., 0] < MIN_EIGENVALUE
    if not np.any(need):
        return mats
    out = mats.copy()
    wn = np.maximum(w[need], MIN_EIGENVALUE)
    vn = v[need]
    m = np.einsum("...ik,...k,...jk->...ij", vn, wn, vn)
    d = np.sqrt(np.einsum("...ii->...i", m))
    m = m / d[..., :, None] / d[..., None, :]
    k = mats.shape[-1]
    m[..., np.arange(k), np.arange(k)] = 1.0
    lmin = np.linalg.eigvalsh(m)[..., 0]
    short = lmin < MIN_EIGENVALUE
    if np.any(short):
        blend = (MIN_EIGENVALUE - lmin[short]) / (1.0 - lmin[short])
        eye = np.eye(k)
        m[short] = (1.0 - blend)[:, None, None] * m[short] + blend[:, None, None] * eye
    out[need] = m
    return out


def correlation_from_latent(latent) -> np.ndarray:
    """Map latent pair values to a valid correlation matrix.

    Accepts a (P,) vector or an (N, P) batch; returns (K, K) or (N, K, K).
    """
    latent = np.asarray(latent, dtype=float)
    if not np.all(np.isfinite(latent)):
        raise ValidationError("latent dependence values must be finite")
    single = latent.ndim == 1
    flat = latent[None, :] if single else latent
    p = flat.shape[-1]
    k = int(round((1 + np.sqrt(1 + 8 * p)) / 2))
    if n_pairs(k) != p:
        raise ValidationError(f"{p} latent values do not form a K x K upper triangle")
    mats = _repair(_assemble(squash(flat), k))
    return mats[0] if single else mats


def dependence_state(latent) -> DependenceState:
    return DependenceState(np.asarray(latent, dtype=float), correlation_from_latent(latent))


def _t_logpdf(y, dof):
    return (
        special.gammaln((dof + 1) / 2.0)
        - special.gammaln(dof / 2.0)
        - 0.5 * np.log(dof * np.pi)
        - (dof + 1) / 2.0 * np.log1p(y * y / dof)
    )


def log_density_from_quantiles(y: np.ndarray, corr: np.ndarray, dof: float) -> np.ndarray:
    """Copula log density evaluated at precomputed t-quantiles ``y``.

    ``y`` is (..., K); ``corr`` is (K, K) or broadcastable (..., K, K).
    """
    y = np.asarray(y, dtype=float)
    k = y.shape[-1]
    chol = np.linalg.cholesky(corr)
    logdet = 2.0 * np.log(np.einsum("...ii->...i", chol)).sum(axis=-1)
    w = np.linalg.solve(chol, y[..., :, None])[..., 0]
    q = (w * w).sum(axis=-1)
    log_mvt = (
        special.gammaln((dof + k) / 2.0)
        - special.gammaln(dof / 2.0)
        - 0.5 * k * np.log(dof * np.pi)
        - 0.5 * logdet
        - (dof + k) / 2.0 * np.log1p(q / dof)
    )
    return log_mvt - _t_logpdf(y, dof).sum(axis=-1)


def copula_log_density(u, corr, dof: float):
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValidationError("copula arguments must lie strictly inside (0, 1)")
    y = special.stdtrit(dof, u)
    return log_density_from_quantiles(y, corr, dof)


def copula_density(u, corr, dof: float):
    """t-copula density: multivariate-t density of the componentwise
    t-quantiles divided by the product of univariate t densities."""
    return np.exp(copula_log_density(u, corr, dof))


def copula_sample(n: int, corr: np.ndarray, dof: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points from the t-copula; marginals are uniform on (0, 1)."""
    if n < 1:
        raise ValidationError("need n >= 1 samples")
    corr = np.asarray(corr, dtype=float)
    chol = np.linalg.cholesky(corr)
    z = rng.standard_normal((n, corr.shape[0]))
    w = rng.chisquare(dof, n)
    y = (z @ chol.T) * np.sqrt(dof / w)[:, None]
    return special.stdtr(dof, y)


def sample_from_correlations(corr: np.ndarray, dof: float, rng: np.random.Generator) -> np.ndarray:
    """One draw per correlation matrix: (N, K, K) -> (N, K) uniforms."""
    chol = np.linalg.cholesky(corr)
    n, k = corr.shape[0], corr.shape[-1]
    z = rng.standard_normal((n, k))
    w = rng.chisquare(dof, n)
    y = np.einsum("nij,nj->ni", chol, z) * np.sqrt(dof / w)[:, None]
    return special.stdtr(dof, y)
