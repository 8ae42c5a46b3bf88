"""Rolling-window forecasting study orchestration.

For every (model spec, origin) task: fit on the trailing window, simulate a
trajectory ensemble over the evaluation horizon, map log-scale forecasts back
to price levels with the overflow cap, and score against the realized panel.
All randomness derives from the master seed through a documented per-task
derivation, so studies replay bit-identically.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .errors import ValidationError
from .estimation import FitOptions, FitResult, fit
from .forecasting import ForecastEnsemble, forecast
from .meanvol import filter_pass
from .modelspec import ModelSpec, ParameterSet
from .panel import DEFAULT_CAP, Panel, to_log
from .scoring import Scope, ScoreReport, improvement_table, multiscope_es, rmse, table_to_markdown

SEED_DERIVATION = "numpy SeedSequence([master_seed, spec_index, origin_index])"


@dataclass
class StudyConfig:
    specs: list[ModelSpec]
    spec_ids: list[str] = field(default_factory=list)
    window: int = 1000
    horizon: int = 30
    n_origins: int = 250
    n_trajectories: int = 2048
    seed: int = 0
    cap: float = DEFAULT_CAP
    baseline: str | None = None
    mode: str = "point-update"
    max_failure_rate: float = 0.10
    fit: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        if not self.specs:
            raise ValidationError("study needs at least one model spec")
        if not self.spec_ids:
            self.spec_ids = [s.model_id for s in self.specs]
        if len(self.spec_ids) != len(self.specs):
            raise ValidationError("spec_ids must parallel specs")
        if len(set(self.spec_ids)) != len(self.spec_ids):
            raise ValidationError("spec ids must be unique")
        if self.baseline is None:
            self.baseline = self.spec_ids[0]
        if self.baseline not in self.spec_ids:
            raise ValidationError(f"baseline {self.baseline!r} is not a configured spec id")
        if self.window < 3 or self.horizon < 1:
            raise ValidationError("window must be >= 3 and horizon >= 1")

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "horizon": self.horizon,
            "n_origins": self.n_origins,
            "n_trajectories": self.n_trajectories,
            "seed": self.seed,
            "cap": self.cap,
            "baseline": self.baseline,
            "mode": self.mode,
            "max_failure_rate": self.max_failure_rate,
            "fit": {"maxiter": self.fit.maxiter, "gtol": self.fit.gtol, "fd_step": self.fit.fd_step,
                    "fd_scheme": self.fit.fd_scheme, "min_obs": self.fit.min_obs,
                    "stage_maxiter": self.fit.stage_maxiter, "burn_in": self.fit.init.burn_in},
            "specs": {sid: s.to_dict() for sid, s in zip(self.spec_ids, self.specs)},
        }

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        """Read the key = value study file with one [spec <id>] section per model."""
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ValidationError(f"cannot read study config {path}")
        if "study" not in parser:
            raise ValidationError(f"{path}: missing [study] section")
        s = parser["study"]
        specs, ids = [], []
        for section in parser.sections():
            if not section.startswith("spec"):
                continue
            sid = section[4:].strip()
            if not sid:
                raise ValidationError(f"{path}: spec sections must be named '[spec <id>]'")
            sec = parser[section]
            specs.append(ModelSpec(
                rank=sec.getint("rank", 0),
                short_run=sec.getboolean("short_run", True),
                sigma_time_varying=sec.getboolean("sigma_time_varying", True),
                rho_time_varying=sec.getboolean("rho_time_varying", True),
                leverage=sec.getboolean("leverage", False),
                ncp=sec.getboolean("ncp", False),
                log_scale=sec.getboolean("log_scale", False),
                intercept=sec.getboolean("intercept", False),
            ))
            ids.append(sid)
        fit_opts = FitOptions(
            maxiter=s.getint("fit_maxiter", FitOptions.maxiter),
            gtol=s.getfloat("fit_gtol", FitOptions.gtol),
            min_obs=s.getint("fit_min_obs", FitOptions.min_obs),
            stage_maxiter=s.getint("fit_stage_maxiter", FitOptions.stage_maxiter),
        )
        return cls(
            specs=specs,
            spec_ids=ids,
            window=s.getint("window", 1000),
            horizon=s.getint("horizon", 30),
            n_origins=s.getint("origins", 250),
            n_trajectories=s.getint("trajectories", 2048),
            seed=s.getint("seed", 0),
            cap=s.getfloat("cap", DEFAULT_CAP),
            baseline=s.get("baseline", None),
            mode=s.get("mode", "point-update"),
            max_failure_rate=s.getfloat("max_failure_rate", 0.10),
            fit=fit_opts,
        )


@dataclass
class StudyResult:
    table: pd.DataFrame
    reports: list[ScoreReport]
    failures: list[dict]
    manifest: dict
    ok: bool
    outdir: Path | None = None


def origin_grid(t_len: int, window: int, horizon: int) -> np.ndarray:
    """All usable forecast origins: {window, ..., t_len - horizon - 1}.

    An origin t fits on rows [t - window + 1, t] and is scored against rows
    [t + 1, t + horizon].
    """
    if t_len < window + horizon + 1:
        raise ValidationError("panel too short for the requested window and horizon")
    return np.arange(window, t_len - horizon)


def sample_origins(t_len: int, cfg: StudyConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw without replacement from the origin grid, sorted."""
    grid = origin_grid(t_len, cfg.window, cfg.horizon)
    if cfg.n_origins > len(grid):
        raise ValidationError(f"n_origins={cfg.n_origins} exceeds the grid size {len(grid)}")
    return np.sort(rng.choice(grid, size=cfg.n_origins, replace=False))


def task_seed(cfg_seed: int, spec_index: int, origin: int) -> list[int]:
    return [int(cfg_seed), int(spec_index), int(origin)]


def run_task(panel: Panel, spec: ModelSpec, origin: int, cfg: StudyConfig,
             spec_index: int = 0, warm_start: ParameterSet | None = None) -> tuple[FitResult, ForecastEnsemble]:
    """Fit at one origin and forecast the evaluation horizon.

    Consumes only panel rows up to and including ``origin``; the returned
    ensemble is on the price-level scale (log-scale forecasts exponentiated
    and capped, with the replacement count recorded).
    """
    data = to_log(panel) if spec.log_scale else panel
    win = data.window(origin - cfg.window + 1, origin + 1)
    fit_res = fit(win, spec, cfg.fit, warm_start=warm_start)
    fr = filter_pass(win, spec, fit_res.params, cfg.fit.init)
    state = fr.end_state(win)
    ens = forecast(state, fit_res.params, spec, cfg.horizon, cfg.n_trajectories,
                   seed=task_seed(cfg.seed, spec_index, origin), mode=cfg.mode)
    return fit_res, ens.to_levels(cfg.cap, spec.log_scale)


def _spec_chain(args) -> tuple[int, list[tuple[int, FitResult, ForecastEnsemble]], list[dict]]:
    """Run every origin of one spec sequentially, warm-starting along the chain."""
    panel, spec, spec_id, spec_index, origins, cfg = args
    results, failures = [], []
    warm = None
    for origin in origins:
        try:
            fit_res, ens = run_task(panel, spec, int(origin), cfg, spec_index, warm_start=warm)
        except Exception as exc:  # noqa: BLE001 - task isolation by contract
            failures.append({"spec": spec_id, "origin": int(origin), "error": f"{type(exc).__name__}: {exc}"})
            continue
        warm = fit_res.params
        results.append((int(origin), fit_res, ens))
    return spec_index, results, failures


def study_scopes(horizon: int, labels: list[str]) -> list[tuple[str, Scope]]:
    """The (metric, scope) cells of the evaluation tables."""
    full = tuple(range(1, horizon + 1))
    marks = sorted({1, min(5, horizon), horizon})
    out: list[tuple[str, Scope]] = [("ES", Scope(None, full))]
    out += [("ES", Scope((lab,), full)) for lab in labels]
    out += [("ES", Scope(None, (m,))) for m in marks]
    for lab in labels:
        out += [("CRPS", Scope((lab,), (m,))) for m in marks]
        out += [("RMSE", Scope((lab,), (m,))) for m in marks]
    seen = set()
    dedup = []
    for metric, scope in out:
        key = (metric, scope.name)
        if key not in seen:
            seen.add(key)
            dedup.append((metric, scope))
    return dedup


def _panel_sha(panel: Panel) -> str:
    digest = hashlib.sha256()
    digest.update(panel.dates.tobytes())
    digest.update(panel.values.tobytes())
    digest.update("|".join(panel.labels).encode())
    return digest.hexdigest()


def run_study(panel: Panel, cfg: StudyConfig, outdir=None, jobs: int = 1) -> StudyResult:
    """Execute the rolling-window study and aggregate the score tables.

    Per-task failures are recorded and skipped; the study is marked failed
    only when the failure rate exceeds ``cfg.max_failure_rate``. With
    ``jobs > 1`` specs run in parallel; origins within a spec stay sequential
    so warm-start chains (and therefore results) do not depend on scheduling.
    """
    t_start = time.monotonic()
    if panel.transform_tag != "levels":
        raise ValidationError("run_study expects a levels panel")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
    origins = sample_origins(len(panel.dates), cfg, rng)

    tasks = [(panel, spec, sid, idx, origins, cfg)
             for idx, (spec, sid) in enumerate(zip(cfg.specs, cfg.spec_ids))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            chain_out = list(pool.map(_spec_chain, tasks))
    else:
        chain_out = [_spec_chain(t) for t in tasks]
    chain_out.sort(key=lambda r: r[0])

    failures: list[dict] = []
    per_spec: dict[str, list[tuple[int, FitResult, ForecastEnsemble]]] = {}
    for idx, results, fails in chain_out:
        per_spec[cfg.spec_ids[idx]] = results
        failures.extend(fails)

    reports: list[ScoreReport] = []
    scopes = study_scopes(cfg.horizon, panel.labels)
    for sid in cfg.spec_ids:
        results = per_spec[sid]
        if not results:
            continue
        okay_origins = np.array([o for o, _, _ in results])
        ens_arrays = [ens.trajectories for _, _, ens in results]
        observed = [panel.values[o + 1:o + 1 + cfg.horizon] for o in okay_origins]
        points = [traj.mean(axis=0) for traj in ens_arrays]
        for metric, scope in scopes:
            if metric in ("ES", "CRPS"):
                value, losses = multiscope_es(ens_arrays, observed, scope, panel.labels)
            else:
                value, losses = rmse(points, observed, scope, panel.labels)
            reports.append(ScoreReport(
                model_id=sid, metric=metric, scope=scope.name, value=value,
                horizon=max(scope.horizons), losses=losses, origins=okay_origins,
            ))

    n_tasks = len(cfg.specs) * len(origins)
    failure_rate = len(failures) / n_tasks if n_tasks else 0.0
    ok = failure_rate <= cfg.max_failure_rate and any(per_spec.values())
    table = improvement_table(reports, cfg.baseline) if any(r.model_id == cfg.baseline for r in reports) \
        else pd.DataFrame()

    manifest = {
        "schema_version": 1,
        "library_version": __version__,
        "config": cfg.to_dict(),
        "origins": origins.tolist(),
        "seed_derivation": SEED_DERIVATION,
        "labels": list(panel.labels),
        "panel_rows": int(len(panel.dates)),
        "panel_sha256": _panel_sha(panel),
        "n_tasks": n_tasks,
        "failures": failures,
        "failure_rate": failure_rate,
        "wall_time_s": time.monotonic() - t_start,
    }

    result = StudyResult(table=table, reports=reports, failures=failures,
                         manifest=manifest, ok=ok, outdir=None)
    if outdir is not None:
        result.outdir = _persist(Path(outdir), result, per_spec, cfg)
    return result


def _persist(outdir: Path, result: StudyResult,
             per_spec: dict[str, list[tuple[int, FitResult, ForecastEnsemble]]],
             cfg: StudyConfig) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(result.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for sid, results in per_spec.items():
        fit_dir = outdir / "fits" / sid
        ens_dir = outdir / "ensembles" / sid
        fit_dir.mkdir(parents=True, exist_ok=True)
        ens_dir.mkdir(parents=True, exist_ok=True)
        for origin, fit_res, ens in results:
            fit_res.to_json(fit_dir / f"origin_{origin}.json")
            ens.to_csv(ens_dir / f"origin_{origin}.csv.gz")
    if len(result.table):
        result.table.to_csv(outdir / "scores.csv", index=False, float_format="%.17g")
        with open(outdir / "improvement.md", "w", encoding="utf-8") as fh:
            for metric in ("ES", "CRPS", "RMSE"):
                if (result.table["metric"] == metric).any():
                    fh.write(f"## {metric}\n\n")
                    fh.write(table_to_markdown(result.table, metric))
                    fh.write("\n")
    loss_rows = []
    for r in result.reports:
        for origin, loss in zip(r.origins, r.losses):
            loss_rows.append({"model": r.model_id, "metric": r.metric, "scope": r.scope,
                              "origin": int(origin), "loss": loss})
    if loss_rows:
        pd.DataFrame(loss_rows).to_csv(outdir / "losses.csv", index=False, float_format="%.17g")
    return outdir
