"""Sample-based proper scoring rules and forecast-comparison machinery.

The energy score of an ensemble {X_1..X_n} against an observation x is

    ES = (1/n) sum_i ||X_i - x||_2 - (1/(2 n^2)) sum_{i,j} ||X_i - X_j||_2,

the plain Monte-Carlo estimator of the population form (an ``unbiased``
variant divides the second term by n(n-1) instead). CRPS is its univariate
special case. Model comparisons use the Diebold-Mariano test with a Bartlett
long-run variance and the Harvey small-sample adjustment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist
from scipy.stats import t as student_t

from .errors import ValidationError


def energy_score(samples: np.ndarray, obs: np.ndarray, second_term: str = "plain") -> float:
    """Energy score of an (n, D) sample matrix against a D-vector observation."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    obs = np.atleast_1d(np.asarray(obs, dtype=float))
    n, d = samples.shape
    if n < 2:
        raise ValidationError("energy score needs at least 2 samples")
    if obs.shape != (d,):
        raise ValidationError("observation dimension does not match the samples")
    term1 = np.linalg.norm(samples - obs, axis=1).mean()
    pair_sum = pdist(samples).sum()  # sum over unordered pairs, i < j
    if second_term == "plain":
        term2 = pair_sum / n**2
    elif second_term == "unbiased":
        term2 = pair_sum / (n * (n - 1))
    else:
        raise ValidationError(f"unknown second_term variant {second_term!r}")
    return float(term1 - term2)


def crps(samples: np.ndarray, obs: float, second_term: str = "plain") -> float:
    """Continuous ranked probability score: the 1-D energy score."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 1)
    return energy_score(samples, np.atleast_1d(float(obs)), second_term)


@dataclass(frozen=True)
class Scope:
    """Which (series, horizon) cells of an ensemble a score aggregates over.

    ``variables=None`` means all series; horizons are 1-based forecast steps.
    """

    variables: tuple[str, ...] | None
    horizons: tuple[int, ...]

    @property
    def name(self) -> str:
        var = "All" if self.variables is None else "+".join(self.variables)
        hs = sorted(self.horizons)
        if len(hs) > 2 and hs == list(range(hs[0], hs[-1] + 1)):
            hor = f"{hs[0]}-{hs[-1]}"
        else:
            hor = "+".join(map(str, hs))
        return f"{var}|H{hor}"


def _scope_columns(scope: Scope, labels: list[str], horizon: int) -> tuple[np.ndarray, np.ndarray]:
    variables = labels if scope.variables is None else list(scope.variables)
    for v in variables:
        if v not in labels:
            raise ValidationError(f"scope variable {v!r} not present in the ensemble")
    for h in scope.horizons:
        if not 1 <= h <= horizon:
            raise ValidationError(f"scope horizon {h} outside the ensemble horizon {horizon}")
    var_idx = np.array([labels.index(v) for v in variables])
    hor_idx = np.array(sorted(scope.horizons)) - 1
    return var_idx, hor_idx


def multiscope_es(ensembles, observed, scope: Scope, labels: list[str],
                  second_term: str = "plain") -> tuple[float, np.ndarray]:
    """Energy score of flattened (series x horizon) cells, averaged over origins.

    ``ensembles`` holds one (n, h, K) trajectory array per origin and
    ``observed`` the matching (h, K) realized values. Returns the mean score
    and the per-origin scores.
    """
    if len(ensembles) == 0 or len(ensembles) != len(observed):
        raise ValidationError("need one observation block per ensemble")
    losses = np.empty(len(ensembles))
    for i, (traj, obs) in enumerate(zip(ensembles, observed)):
        traj = np.asarray(traj, dtype=float)
        obs = np.asarray(obs, dtype=float)
        var_idx, hor_idx = _scope_columns(scope, labels, traj.shape[1])
        flat = traj[:, hor_idx][:, :, var_idx].reshape(traj.shape[0], -1)
        flat_obs = obs[hor_idx][:, var_idx].reshape(-1)
        losses[i] = energy_score(flat, flat_obs, second_term)
    return float(losses.mean()), losses


def rmse(point_forecasts, observed, scope: Scope, labels: list[str]) -> tuple[float, np.ndarray]:
    """Root mean squared error over origins for one (variables, horizons) scope.

    Per-origin losses are mean squared errors over the scope cells, so the
    aggregate equals sqrt(mean(losses)).
    """
    if len(point_forecasts) == 0 or len(point_forecasts) != len(observed):
        raise ValidationError("need one observation block per forecast")
    losses = np.empty(len(point_forecasts))
    for i, (fc, obs) in enumerate(zip(point_forecasts, observed)):
        fc = np.asarray(fc, dtype=float)
        obs = np.asarray(obs, dtype=float)
        var_idx, hor_idx = _scope_columns(scope, labels, fc.shape[0])
        err = fc[hor_idx][:, var_idx] - obs[hor_idx][:, var_idx]
        losses[i] = float(np.mean(err**2))
    return float(np.sqrt(losses.mean())), losses


@dataclass
class DMResult:
    statistic: float
    p_value: float
    zero_variance: bool = False


def harvey_factor(t_len: int, h: int) -> float:
    return float(np.sqrt((t_len + 1 - 2 * h + h * (h - 1) / t_len) / t_len))


def dm_test(loss_a: np.ndarray, loss_b: np.ndarray, h: int = 1) -> DMResult:
    """Diebold-Mariano test on the loss differential d = loss_a - loss_b.

    Negative statistics favor ``a``. The long-run variance uses a Bartlett
    kernel with h-1 lags; the Harvey factor corrects the small-sample size and
    the p-value comes from the t distribution with T-1 degrees of freedom.
    """
    loss_a = np.asarray(loss_a, dtype=float)
    loss_b = np.asarray(loss_b, dtype=float)
    if loss_a.shape != loss_b.shape or loss_a.ndim != 1:
        raise ValidationError("loss series must be 1-d and equal length")
    t_len = len(loss_a)
    if t_len < 10:
        raise ValidationError("need at least 10 loss observations")
    if h < 1:
        raise ValidationError("horizon must be >= 1")
    d = loss_a - loss_b
    d_bar = d.mean()
    dev = d - d_bar
    gamma0 = float(dev @ dev) / t_len
    if gamma0 == 0.0:
        return DMResult(0.0, 1.0, zero_variance=True)
    lrv = gamma0
    for k in range(1, h):
        gamma_k = float(dev[k:] @ dev[:-k]) / t_len
        lrv += 2.0 * (1.0 - k / h) * gamma_k
    if lrv <= 0:
        lrv = gamma0
    stat = harvey_factor(t_len, h) * d_bar / np.sqrt(lrv / t_len)
    p = 2.0 * (1.0 - student_t.cdf(abs(stat), df=t_len - 1))
    return DMResult(float(stat), float(p))


@dataclass
class ScoreReport:
    """One (model, metric, scope) cell of the evaluation tables."""

    model_id: str
    metric: str  # "ES", "CRPS" or "RMSE"
    scope: str
    value: float
    horizon: int = 1  # DM lag horizon for this scope
    relative_improvement_pct: float | None = None
    dm_stat: float | None = None
    losses: np.ndarray | None = field(default=None, repr=False)
    origins: np.ndarray | None = field(default=None, repr=False)


def improvement_table(reports: list[ScoreReport], baseline_id: str) -> pd.DataFrame:
    """Percent improvement and DM statistic of every model against a baseline.

    Returns a long-format frame with one row per (model, metric, scope); the
    baseline rows carry the raw scores and zero improvement. DM statistics are
    computed on the per-origin losses, aligned on common origins.
    """
    base = {(r.metric, r.scope): r for r in reports if r.model_id == baseline_id}
    if not base:
        raise ValidationError(f"baseline {baseline_id!r} not present in the reports")
    rows = []
    for r in reports:
        key = (r.metric, r.scope)
        if key not in base:
            raise ValidationError(f"baseline missing scope {r.scope!r} for metric {r.metric}")
        b = base[key]
        if r.model_id == baseline_id:
            imp, dm = 0.0, 0.0
        else:
            imp = 100.0 * (b.value - r.value) / b.value if b.value > 0 else np.nan
            dm = np.nan
            if r.losses is not None and b.losses is not None:
                la, lb = _align_losses(r, b)
                if len(la) >= 10:
                    dm = dm_test(la, lb, h=r.horizon).statistic
        rows.append({
            "model": r.model_id, "metric": r.metric, "scope": r.scope,
            "score": r.value, "improvement_pct": imp, "dm_stat": dm,
        })
    df = pd.DataFrame(rows)
    order = {baseline_id: 0}
    df["_ord"] = df["model"].map(lambda m: order.get(m, 1))
    df = df.sort_values(["_ord", "model", "metric", "scope"]).drop(columns="_ord").reset_index(drop=True)
    return df


def _align_losses(r: ScoreReport, b: ScoreReport) -> tuple[np.ndarray, np.ndarray]:
    if r.origins is None or b.origins is None:
        n = min(len(r.losses), len(b.losses))
        return r.losses[:n], b.losses[:n]
    common, ia, ib = np.intersect1d(r.origins, b.origins, return_indices=True)
    return r.losses[ia], b.losses[ib]


def table_to_markdown(df: pd.DataFrame, metric: str) -> str:
    """Wide rendering of one metric: model rows, scope columns, '%imp (dm)' cells."""
    sub = df[df["metric"] == metric]
    scopes = list(dict.fromkeys(sub["scope"]))
    models = list(dict.fromkeys(sub["model"]))
    lines = ["| Model | " + " | ".join(scopes) + " |",
             "|" + "---|" * (len(scopes) + 1)]
    for i, m in enumerate(models):
        cells = []
        for s in scopes:
            row = sub[(sub["model"] == m) & (sub["scope"] == s)].iloc[0]
            if i == 0:
                cells.append(f"{row['score']:.4g}")
            else:
                dm = row["dm_stat"]
                dm_txt = "" if pd.isna(dm) else f" ({dm:+.2f})"
                cells.append(f"{row['improvement_pct']:.2f}%{dm_txt}")
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
