"""Joint maximum-likelihood estimation of the full model family.

The log likelihood factorizes over time into a copula term plus per-series
marginal terms evaluated at the filtered conditional means and variances.
Estimation runs a staged warm start (error-correction mean by reduced-rank
least squares, per-series variance/marginal fits, copula fit on standardized
residuals) followed by joint quasi-Newton refinement of every parameter in an
unconstrained reparameterization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import __version__
from . import copula as cop
from . import marginals
from .errors import NumericalError, ValidationError
from .meanvol import FilterResult, GarchParams, InitPolicy, VecmParams, filter_pass, garch_path, latent_path, resolve_init
from .modelspec import MarginalShape, ModelSpec, ParameterSet
from .panel import Panel

STATIONARITY_LIMIT = 0.999  # bound on max shock coefficient + persistence
NU_CAP = marginals.NU_MAX
DOF_CAP = cop.DOF_MAX
U_EPS = 1e-12  # clamp for probability transforms near the boundary
PENALTY = 1e10
_LOGIT_CLIP = 1e-12


def _logit(p):
    return special.logit(np.clip(p, _LOGIT_CLIP, 1.0 - _LOGIT_CLIP))


@dataclass
class FitOptions:
    maxiter: int = 2000
    gtol: float = 1e-5
    fd_step: float = 1e-5
    fd_scheme: str = "central"
    min_obs: int = 200
    stage_maxiter: int = 300
    compute_stderr: bool = False
    init: InitPolicy = field(default_factory=InitPolicy)


@dataclass
class FitResult:
    params: ParameterSet
    spec: ModelSpec
    loglik: float
    staged_loglik: float
    iterations: int
    converged: bool
    grad_max: float
    n_obs: int
    labels: list[str]
    stderr: dict[str, float] | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "library_version": __version__,
            "spec": self.spec.to_dict(),
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "staged_loglik": self.staged_loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_max": self.grad_max,
            "n_obs": self.n_obs,
            "labels": self.labels,
            "stderr": self.stderr,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            params=ParameterSet.from_dict(d["params"]),
            spec=ModelSpec.from_dict(d["spec"]),
            loglik=d["loglik"],
            staged_loglik=d["staged_loglik"],
            iterations=d["iterations"],
            converged=d["converged"],
            grad_max=d["grad_max"],
            n_obs=d["n_obs"],
            labels=list(d["labels"]),
            stderr=d.get("stderr"),
        )

    @classmethod
    def from_json(cls, path) -> "FitResult":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Likelihood


def log_likelihood_components(panel: Panel, spec: ModelSpec, params: ParameterSet,
                              init: InitPolicy | None = None) -> tuple[np.ndarray, np.ndarray, int, FilterResult]:
    """Per-step likelihood terms: (marginal (T', K), copula (T',), burn_in, filter)."""
    params.validate(spec)
    init = init or InitPolicy()
    fr = filter_pass(panel, spec, params, init)
    nus = np.array([m.nu for m in params.marginals])
    ncps = np.array([m.ncp for m in params.marginals])
    x_obs = panel.values[2:]
    marg = marginals.logpdf_arr(x_obs, fr.mu, fr.sigma2, nus, ncps)
    if panel.shape[1] >= 2:
        u = np.clip(marginals.cdf_arr(x_obs, fr.mu, fr.sigma2, nus, ncps), U_EPS, 1.0 - U_EPS)
        y = special.stdtrit(params.copula.dof, u)
        cop_terms = cop.log_density_from_quantiles(y, fr.corr, params.copula.dof)
    else:
        cop_terms = np.zeros(len(x_obs))
    return marg, cop_terms, init.burn_in, fr


def log_likelihood(panel: Panel, spec: ModelSpec, params: ParameterSet,
                   init: InitPolicy | None = None) -> float:
    """Joint log likelihood over the filtered sample (burn-in excluded)."""
    marg, cop_terms, burn, _ = log_likelihood_components(panel, spec, params, init)
    if burn >= len(cop_terms):
        raise ValidationError("burn-in leaves no observations in the likelihood")
    marg = marg[burn:]
    cop_terms = cop_terms[burn:]
    if not np.all(np.isfinite(marg)):
        t, k = map(int, np.argwhere(~np.isfinite(marg))[0])
        raise NumericalError(f"marginal density non-finite at t={t + burn + 3}, series index {k}")
    if not np.all(np.isfinite(cop_terms)):
        t = int(np.argwhere(~np.isfinite(cop_terms))[0][0])
        raise NumericalError(f"copula density non-finite at t={t + burn + 3}")
    return float(marg.sum() + cop_terms.sum())


# ---------------------------------------------------------------------------
# Unconstrained reparameterization


class ParameterTransform:
    """Bijection between a ParameterSet and an unconstrained vector.

    Positives go through log, the variance recursion through a nested
    stick-breaking map keeping max(alpha_pos, alpha_neg) + beta below the
    stationarity limit, latent persistence through atanh, and the degrees of
    freedom through 2 + exp with estimation caps enforced as optimizer box
    bounds on the raw coordinate.
    """

    def __init__(self, spec: ModelSpec, k: int):
        self.spec = spec
        self.k = k
        self.n_pairs = cop.n_pairs(k)
        names: list[str] = []
        lower: list[float] = []
        upper: list[float] = []

        def add(name, lo=-np.inf, hi=np.inf):
            names.append(name)
            lower.append(lo)
            upper.append(hi)

        r = spec.rank
        if r > 0:
            for i in range(k):
                for j in range(r):
                    add(f"vecm.alpha[{i},{j}]")
            for i in range(k - r):
                for j in range(r):
                    add(f"vecm.beta[{r + i},{j}]")
        if spec.short_run:
            for i in range(k):
                for j in range(k):
                    add(f"vecm.gamma[{i},{j}]")
        if spec.intercept:
            for i in range(k):
                add(f"vecm.intercept[{i}]")
        for i in range(k):
            if spec.sigma_time_varying:
                add(f"garch[{i}].omega_log")
                add(f"garch[{i}].beta_raw")
                if spec.leverage:
                    add(f"garch[{i}].alpha_pos_raw")
                    add(f"garch[{i}].alpha_neg_raw")
                else:
                    add(f"garch[{i}].alpha_raw")
            else:
                add(f"garch[{i}].sigma2_log")
            add(f"marginal[{i}].nu_raw", -np.inf, np.log(NU_CAP - 2.0))
            if spec.ncp:
                add(f"marginal[{i}].ncp")
        for j in range(self.n_pairs):
            if spec.rho_time_varying:
                add(f"copula[{j}].level")
                add(f"copula[{j}].persistence_raw")
                add(f"copula[{j}].reaction")
            else:
                add(f"copula[{j}].latent_const")
        add("copula.dof_raw", -np.inf, np.log(DOF_CAP - 2.0))

        self.names = names
        self.lower = np.array(lower)
        self.upper = np.array(upper)
        self.size = len(names)

    def bounds(self) -> list[tuple[float | None, float | None]]:
        return [
            (None if lo == -np.inf else lo, None if hi == np.inf else hi)
            for lo, hi in zip(self.lower, self.upper)
        ]

    def to_vector(self, params: ParameterSet) -> np.ndarray:
        spec, k = self.spec, self.k
        out: list[float] = []
        v = params.vecm
        if spec.rank > 0:
            out.extend(v.alpha.ravel())
            out.extend(v.beta[spec.rank:].ravel())
        if spec.short_run:
            out.extend(v.gamma.ravel())
        if spec.intercept:
            out.extend(v.intercept)
        for i in range(k):
            g = params.garch[i]
            if spec.sigma_time_varying:
                out.append(np.log(g.omega))
                out.append(_logit(g.beta_persist / STATIONARITY_LIMIT))
                room = STATIONARITY_LIMIT - g.beta_persist
                if spec.leverage:
                    out.append(_logit(g.alpha_pos / room))
                    out.append(_logit(g.alpha_neg / room))
                else:
                    out.append(_logit(g.alpha_pos / room))
            else:
                out.append(np.log(g.omega))
            m = params.marginals[i]
            out.append(np.log(m.nu - 2.0))
            if spec.ncp:
                out.append(m.ncp)
        c = params.copula
        for j in range(self.n_pairs):
            if spec.rho_time_varying:
                out.extend([c.level[j], np.arctanh(c.persistence[j]), c.reaction[j]])
            else:
                out.append(c.latent_const[j])
        out.append(np.log(c.dof - 2.0))
        vec = np.array(out)
        if len(vec) != self.size:
            raise ValidationError("parameter set inconsistent with the transform layout")
        return vec

    def from_vector(self, vec: np.ndarray) -> ParameterSet:
        spec, k = self.spec, self.k
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise ValidationError(f"expected vector of length {self.size}, got {vec.shape}")
        pos = 0

        def take(n):
            nonlocal pos
            chunk = vec[pos:pos + n]
            pos += n
            return chunk

        r = spec.rank
        if r > 0:
            alpha = take(k * r).reshape(k, r)
            beta = np.vstack([np.eye(r), take((k - r) * r).reshape(k - r, r)])
        else:
            alpha = np.zeros((k, 0))
            beta = np.zeros((k, 0))
        gamma = take(k * k).reshape(k, k) if spec.short_run else np.zeros((k, k))
        intercept = take(k).copy() if spec.intercept else None
        vecm = VecmParams(alpha, beta, gamma, r, intercept)

        garch: list[GarchParams] = []
        margs: list[MarginalShape] = []
        for _ in range(k):
            if spec.sigma_time_varying:
                omega = np.exp(take(1)[0])
                beta_p = STATIONARITY_LIMIT * special.expit(take(1)[0])
                room = STATIONARITY_LIMIT - beta_p
                if spec.leverage:
                    a_pos = room * special.expit(take(1)[0])
                    a_neg = room * special.expit(take(1)[0])
                else:
                    a_pos = a_neg = room * special.expit(take(1)[0])
                garch.append(GarchParams(omega, a_pos, a_neg, beta_p, spec.leverage))
            else:
                garch.append(GarchParams.constant(np.exp(take(1)[0])))
            nu = 2.0 + np.exp(take(1)[0])
            ncp = take(1)[0] if spec.ncp else 0.0
            margs.append(MarginalShape(nu, ncp))

        if spec.rho_time_varying:
            level = np.empty(self.n_pairs)
            persistence = np.empty(self.n_pairs)
            reaction = np.empty(self.n_pairs)
            for j in range(self.n_pairs):
                level[j] = take(1)[0]
                persistence[j] = np.tanh(take(1)[0])
                reaction[j] = take(1)[0]
            copula = cop.CopulaParams(dof=2.0 + np.exp(take(1)[0]), time_varying=True,
                                      level=level, persistence=persistence, reaction=reaction)
        else:
            latent_const = take(self.n_pairs).copy()
            copula = cop.CopulaParams(dof=2.0 + np.exp(take(1)[0]), time_varying=False,
                                      latent_const=latent_const)
        return ParameterSet(vecm, garch, margs, copula)


def transform_parameters(params: ParameterSet, spec: ModelSpec) -> np.ndarray:
    return ParameterTransform(spec, params.k).to_vector(params)


def inverse_transform_parameters(vec: np.ndarray, spec: ModelSpec, k: int) -> ParameterSet:
    return ParameterTransform(spec, k).from_vector(vec)


# ---------------------------------------------------------------------------
# Finite differences


def finite_diff_gradient(fun, v: np.ndarray, step: float = 1e-5, scheme: str = "central") -> np.ndarray:
    """Finite-difference gradient with per-coordinate relative steps."""
    v = np.asarray(v, dtype=float)
    g = np.empty_like(v)
    f0 = fun(v) if scheme == "forward" else None
    for i in range(len(v)):
        h = step * max(1.0, abs(v[i]))
        if h == 0:
            raise NumericalError("finite-difference step underflowed")
        e = np.zeros_like(v)
        e[i] = h
        if scheme == "central":
            g[i] = (fun(v + e) - fun(v - e)) / (2.0 * h)
        elif scheme == "forward":
            g[i] = (fun(v + e) - f0) / h
        else:
            raise ValidationError(f"unknown finite-difference scheme {scheme!r}")
    return g


def gradient(panel: Panel, spec: ModelSpec, params: ParameterSet,
             init: InitPolicy | None = None, step: float = 1e-5, scheme: str = "central") -> np.ndarray:
    """Gradient of the log likelihood in the unconstrained parameter space."""
    tr = ParameterTransform(spec, params.k)
    init = _frozen_init(panel, init or InitPolicy())

    def fun(v):
        return log_likelihood(panel, spec, tr.from_vector(v), init)

    return finite_diff_gradient(fun, tr.to_vector(params), step=step, scheme=scheme)


def _frozen_init(panel: Panel, init: InitPolicy) -> InitPolicy:
    """Resolve data-dependent seeds once so repeated evaluations share them."""
    s2, lat = resolve_init(panel.values, init)
    return InitPolicy(sigma2=s2, latent=lat, presample_window=init.presample_window, burn_in=init.burn_in)


# ---------------------------------------------------------------------------
# Staged warm start


def _ols(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(x, y, rcond=None)[0]


def _vecm_warm_start(x: np.ndarray, spec: ModelSpec) -> VecmParams:
    k = x.shape[1]
    r = spec.rank
    dx = np.diff(x, axis=0)
    y = dx[1:]  # response: delta x_t for t = 3..T
    x1 = x[1:-1]
    regs = []
    if spec.short_run:
        regs.append(dx[:-1])
    if spec.intercept:
        regs.append(np.ones((len(y), 1)))
    w = np.hstack(regs) if regs else None

    def partial_out(m):
        if w is None:
            return m
        return m - w @ _ols(m, w)

    if r == 0:
        alpha = np.zeros((k, 0))
        beta = np.zeros((k, 0))
    else:
        r0 = partial_out(y)
        r1 = partial_out(x1)
        n = len(y)
        s00 = r0.T @ r0 / n + 1e-12 * np.eye(k)
        s01 = r0.T @ r1 / n
        s11 = r1.T @ r1 / n + 1e-12 * np.eye(k)
        lhs = s01.T @ np.linalg.solve(s00, s01)
        from scipy.linalg import eigh as generalized_eigh

        vals, vecs = generalized_eigh(lhs, s11)
        beta_raw = vecs[:, np.argsort(vals)[::-1][:r]]
        top = beta_raw[:r, :]
        if np.linalg.cond(top) > 1e10:
            beta = beta_raw @ np.linalg.pinv(top)
        else:
            beta = beta_raw @ np.linalg.inv(top)
        blocks = [x1 @ beta] + ([dx[:-1]] if spec.short_run else []) + \
                 ([np.ones((len(y), 1))] if spec.intercept else [])
        coef = _ols(y, np.hstack(blocks))
        alpha = coef[:r].T
        gamma = coef[r:r + k].T if spec.short_run else np.zeros((k, k))
        intercept = coef[-1] if spec.intercept else None
        return VecmParams(alpha, beta, gamma, r, intercept)

    if w is not None:
        coef = _ols(y, w)
        gamma = coef[:k].T if spec.short_run else np.zeros((k, k))
        intercept = coef[-1] if spec.intercept else None
    else:
        gamma = np.zeros((k, k))
        intercept = None
    return VecmParams(alpha, beta, gamma, 0, intercept)


def _series_warm_start(eps: np.ndarray, spec: ModelSpec, burn: int, maxiter: int,
                       nu_bound: float) -> tuple[GarchParams, MarginalShape]:
    """Per-series ML of the variance recursion and marginal shape."""
    var = max(np.var(eps), 1e-12)
    eps_lagged = np.concatenate(([0.0], eps[:-1]))

    if spec.sigma_time_varying:
        n_a = 2 if spec.leverage else 1
        v0 = np.array([np.log(0.10 * var), _logit(0.85 / STATIONARITY_LIMIT)]
                      + [_logit(0.05 / (STATIONARITY_LIMIT - 0.85))] * n_a
                      + [np.log(8.0 - 2.0)] + ([0.0] if spec.ncp else []))
    else:
        v0 = np.array([np.log(var), np.log(8.0 - 2.0)] + ([0.0] if spec.ncp else []))

    def unpack(v):
        pos = 0
        if spec.sigma_time_varying:
            omega = np.exp(v[0])
            beta_p = STATIONARITY_LIMIT * special.expit(v[1])
            room = STATIONARITY_LIMIT - beta_p
            if spec.leverage:
                gp = GarchParams(omega, room * special.expit(v[2]), room * special.expit(v[3]), beta_p, True)
                pos = 4
            else:
                a = room * special.expit(v[2])
                gp = GarchParams(omega, a, a, beta_p, False)
                pos = 3
        else:
            gp = GarchParams.constant(np.exp(v[0]))
            pos = 1
        nu = 2.0 + np.exp(v[pos])
        ncp = v[pos + 1] if spec.ncp else 0.0
        return gp, MarginalShape(nu, ncp)

    def negll(v):
        try:
            gp, ms = unpack(v)
        except (ValidationError, OverflowError):
            return PENALTY
        s2 = garch_path(eps_lagged, gp, var)
        if np.any(s2 <= 0) or not np.all(np.isfinite(s2)):
            return PENALTY
        lp = marginals.logpdf_arr(eps[burn:], 0.0, s2[burn:], ms.nu, ms.ncp)
        val = -lp.sum()
        return val if np.isfinite(val) else PENALTY

    bounds = [(None, None)] * len(v0)
    bounds[-2 if spec.ncp else -1] = (None, nu_bound)
    res = optimize.minimize(negll, v0, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": maxiter})
    return unpack(res.x)


def _copula_warm_start(z: np.ndarray, u: np.ndarray, spec: ModelSpec, latent_init: np.ndarray,
                       burn: int, maxiter: int, dof_bound: float) -> cop.CopulaParams:
    n_steps, k = z.shape
    pairs = cop.pair_indices(k)
    p = len(pairs)
    if p == 0:
        return cop.CopulaParams(dof=12.0, time_varying=spec.rho_time_varying,
                                latent_const=np.zeros(0), level=np.zeros(0),
                                persistence=np.zeros(0), reaction=np.zeros(0))
    emp = np.corrcoef(z.T) if k > 1 else np.eye(1)
    rho0 = np.clip(np.array([emp[i, j] for i, j in pairs]), -0.95, 0.95)
    lat0 = cop.unsquash(rho0)
    zz = np.stack([z[:, i] * z[:, j] for i, j in pairs], axis=1)
    zz_lagged = np.vstack([np.zeros((1, p)), zz[:-1]])

    if spec.rho_time_varying:
        eta1 = 0.90
        v0 = np.concatenate([np.column_stack([
            lat0 * (1 - eta1) - 0.03 * rho0, np.full(p, np.arctanh(eta1)), np.full(p, 0.03)
        ]).ravel(), [np.log(12.0 - 2.0)]])
    else:
        v0 = np.concatenate([lat0, [np.log(12.0 - 2.0)]])

    def negll(v):
        dof = 2.0 + np.exp(v[-1])
        try:
            if spec.rho_time_varying:
                coefs = v[:-1].reshape(p, 3)
                latent = latent_path(zz_lagged, coefs[:, 0], np.tanh(coefs[:, 1]), coefs[:, 2], latent_init)
                corr = cop.correlation_from_latent(latent)
            else:
                corr = cop.correlation_from_latent(v[:-1])
            y = special.stdtrit(dof, u)
            terms = cop.log_density_from_quantiles(y[burn:], corr[burn:] if corr.ndim == 3 else corr, dof)
        except (ValidationError, NumericalError, np.linalg.LinAlgError):
            return PENALTY
        val = -terms.sum()
        return val if np.isfinite(val) else PENALTY

    bounds = [(None, None)] * len(v0)
    bounds[-1] = (None, dof_bound)
    res = optimize.minimize(negll, v0, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": maxiter})
    v = res.x
    dof = 2.0 + np.exp(v[-1])
    if spec.rho_time_varying:
        coefs = v[:-1].reshape(p, 3)
        return cop.CopulaParams(dof=dof, time_varying=True, level=coefs[:, 0],
                                persistence=np.tanh(coefs[:, 1]), reaction=coefs[:, 2])
    return cop.CopulaParams(dof=dof, time_varying=False, latent_const=v[:-1])


def staged_warm_start(panel: Panel, spec: ModelSpec, opts: FitOptions,
                      init: InitPolicy) -> ParameterSet:
    x = panel.values
    k = x.shape[1]
    burn = init.burn_in
    nu_bound = np.log(NU_CAP - 2.0)
    dof_bound = np.log(DOF_CAP - 2.0)

    vecm = _vecm_warm_start(x, spec)
    mu = x[1:-1] + x[1:-1] @ vecm.pi.T + (x[1:-1] - x[:-2]) @ vecm.gamma.T
    if vecm.intercept is not None:
        mu = mu + vecm.intercept
    eps = x[2:] - mu

    garch, margs = [], []
    for i in range(k):
        gp, ms = _series_warm_start(eps[:, i], spec, burn, opts.stage_maxiter, nu_bound)
        garch.append(gp)
        margs.append(ms)

    sigma2 = np.column_stack([
        garch_path(np.concatenate(([0.0], eps[:-1, i])), garch[i], np.asarray(init.sigma2)[i])
        for i in range(k)
    ])
    z = eps / np.sqrt(sigma2)
    nus = np.array([m.nu for m in margs])
    ncps = np.array([m.ncp for m in margs])
    u = np.clip(marginals.cdf_arr(x[2:], mu, sigma2, nus, ncps), U_EPS, 1.0 - U_EPS)
    copula = _copula_warm_start(z, u, spec, np.asarray(init.latent), burn, opts.stage_maxiter, dof_bound)
    return ParameterSet(vecm, garch, margs, copula)


# ---------------------------------------------------------------------------
# Fit


def _projected_grad_max(g: np.ndarray, v: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    proj = g.copy()
    at_lo = v <= lower + 1e-12
    at_hi = v >= upper - 1e-12
    proj[at_lo] = np.minimum(proj[at_lo], 0.0)
    proj[at_hi] = np.maximum(proj[at_hi], 0.0)
    return float(np.max(np.abs(proj))) if len(proj) else 0.0


def fit(panel: Panel, spec: ModelSpec, opts: FitOptions | None = None,
        warm_start: ParameterSet | None = None) -> FitResult:
    """Maximize the joint log likelihood for one model specification.

    Deterministic: the staged warm start and the quasi-Newton refinement use
    no randomness. On non-convergence the best evaluated parameter set is
    returned with ``converged=False``.
    """
    opts = opts or FitOptions()
    if len(panel.dates) < opts.min_obs:
        raise ValidationError(f"need at least {opts.min_obs} observations to fit (got {len(panel.dates)})")
    if spec.rank > panel.shape[1]:
        raise ValidationError("cointegrating rank exceeds the panel dimension")
    init = _frozen_init(panel, opts.init)
    tr = ParameterTransform(spec, panel.shape[1])

    best = {"v": None, "f": np.inf}

    def negll(v):
        try:
            p = tr.from_vector(v)
            val = -log_likelihood(panel, spec, p, init)
        except (ValidationError, NumericalError, np.linalg.LinAlgError):
            return PENALTY
        if not np.isfinite(val):
            return PENALTY
        if val < best["f"]:
            best["f"] = val
            best["v"] = v.copy()
        return val

    if warm_start is not None:
        v0 = tr.to_vector(warm_start)
        if negll(v0) >= PENALTY:
            warm_start = None
    if warm_start is None:
        staged = staged_warm_start(panel, spec, opts, init)
        v0 = tr.to_vector(staged)
    f0 = negll(v0)
    if f0 >= PENALTY:
        raise NumericalError("log likelihood is not finite at the warm start")

    def jac(v):
        return finite_diff_gradient(negll, v, step=opts.fd_step, scheme=opts.fd_scheme)

    res = optimize.minimize(
        negll, v0, method="L-BFGS-B", jac=jac, bounds=tr.bounds(),
        options={"maxiter": opts.maxiter, "ftol": 1e-16, "gtol": opts.gtol, "maxcor": 30},
    )
    v_hat = best["v"] if best["f"] < res.fun else res.x
    f_hat = min(best["f"], float(res.fun))
    g_hat = jac(v_hat)
    grad_max = _projected_grad_max(g_hat, v_hat, tr.lower, tr.upper)
    converged = bool(res.success) and grad_max <= opts.gtol

    stderr = None
    if opts.compute_stderr:
        stderr = _stderr_from_hessian(negll, v_hat, tr, opts.fd_step)

    return FitResult(
        params=tr.from_vector(v_hat),
        spec=spec,
        loglik=-f_hat,
        staged_loglik=-f0,
        iterations=int(res.nit),
        converged=converged,
        grad_max=grad_max,
        n_obs=len(panel.dates),
        labels=list(panel.labels),
        stderr=stderr,
    )


def _stderr_from_hessian(negll, v: np.ndarray, tr: ParameterTransform, step: float) -> dict[str, float]:
    """Raw-coordinate standard errors from a central-difference Hessian."""
    n = len(v)
    h = np.array([step * max(1.0, abs(x)) for x in v])
    hess = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h[i]
            ej[j] = h[j]
            f_pp = negll(v + ei + ej)
            f_pm = negll(v + ei - ej)
            f_mp = negll(v - ei + ej)
            f_mm = negll(v - ei - ej)
            hess[i, j] = hess[j, i] = (f_pp - f_pm - f_mp + f_mm) / (4.0 * h[i] * h[j])
    try:
        cov = np.linalg.inv(hess)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, np.inf))
    except np.linalg.LinAlgError:
        se = np.full(n, np.nan)
    return dict(zip(tr.names, se.tolist()))
