"""Command-line interface: ingest, simulate, fit, forecast, backtest, score, export."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .backtest import StudyConfig, run_study
from .errors import NumericalError, ValidationError
from .estimation import FitOptions, FitResult, fit
from .forecasting import ForecastEnsemble, correlation_path, forecast, summarize
from .meanvol import InitPolicy, filter_pass
from .modelspec import ModelSpec, ParameterSet
from .panel import Panel, align_and_join, ingest_csv, normalize, parse_normalization_config, to_log
from .simulate import default_params, simulate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_PARTIAL = 3

# Default quantile grid (in percent) for the fan-chart export.
DEFAULT_PROBS = "0.2,1,5,25,50,75,95,99,99.8"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _data_dir() -> Path:
    return Path(os.environ.get("VCG_DATA_DIR", "."))


def _resolve(path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() or p.exists() else _data_dir() / path


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rank", type=int, default=0, help="cointegrating rank r")
    p.add_argument("--short-run", action=argparse.BooleanOptionalAction, default=True,
                   help="include the short-run (lagged difference) term")
    p.add_argument("--time-varying-sigma", action=argparse.BooleanOptionalAction, default=True,
                   help="GARCH variance instead of a constant")
    p.add_argument("--time-varying-rho", action=argparse.BooleanOptionalAction, default=True,
                   help="dynamic dependence instead of a constant copula correlation")
    p.add_argument("--leverage", action="store_true", help="sign-split shock coefficients")
    p.add_argument("--ncp", action="store_true", help="estimate marginal non-centrality")
    p.add_argument("--log", action="store_true", help="model log-transformed data")
    p.add_argument("--intercept", action="store_true", help="include a mean intercept")


def _spec_from_args(args) -> ModelSpec:
    return ModelSpec(rank=args.rank, short_run=args.short_run,
                     sigma_time_varying=args.time_varying_sigma,
                     rho_time_varying=args.time_varying_rho,
                     leverage=args.leverage, ncp=args.ncp,
                     log_scale=args.log, intercept=args.intercept)


def _load_panel(path, log_expected=False) -> Panel:
    panel = Panel.from_csv(_resolve(path))
    return panel


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vcg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"vcg {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest",
                       help="read raw CSVs, align, normalize and write a modeling panel")
    p.add_argument("--input", required=True, nargs="+", help="raw CSV files (date + price columns)")
    p.add_argument("--join", choices=["inner", "forward-fill"], default="inner")
    p.add_argument("--max-gap", type=int, default=5)
    p.add_argument("--normalization", help="flat key=value file with factor./hicp./fx. entries")
    p.add_argument("--log", action="store_true", help="emit the log-transformed panel")
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate",
                       help="simulate a synthetic panel from the model and write ground truth")
    _add_spec_flags(p)
    p.add_argument("--params", help="parameter JSON (defaults to a documented demo set)")
    p.add_argument("--series", type=int, default=2, help="panel dimension K when using default params")
    p.add_argument("-T", "--length", type=int, required=True, help="number of observations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0", type=float, default=None, help="common starting value for all series")
    p.add_argument("--emit", choices=["model", "levels"], default=None,
                   help="write model-scale values or exponentiated levels (default: levels for --log)")
    p.add_argument("--out", required=True, help="panel CSV path; ground truth goes to <out>.truth.json")

    p = sub.add_parser("fit", help="maximum-likelihood fit on a panel")
    _add_spec_flags(p)
    p.add_argument("--data", required=True, help="panel CSV (levels)")
    p.add_argument("--out", required=True, help="fit result JSON")
    p.add_argument("--maxiter", type=int, default=2000)
    p.add_argument("--gtol", type=float, default=1e-5)
    p.add_argument("--min-obs", type=int, default=200)
    p.add_argument("--burn-in", type=int, default=10)
    p.add_argument("--stderr", action="store_true", help="finite-difference standard errors")

    p = sub.add_parser("forecast", help="simulate forecast trajectories from a fit")
    p.add_argument("--fit", required=True, help="fit result JSON")
    p.add_argument("--data", required=True, help="panel CSV the fit was made on (levels)")
    p.add_argument("--horizon", type=int, default=30)
    p.add_argument("--trajectories", type=int, default=2048)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["point-update", "per-trajectory"], default="point-update")
    p.add_argument("--cap", type=float, default=1e5)
    p.add_argument("--probs", default=DEFAULT_PROBS, help="summary quantiles in percent")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("backtest", help="rolling-window forecasting study")
    p.add_argument("--data", required=True, help="panel CSV (levels)")
    p.add_argument("--config", required=True, help="study config file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers across model specs")

    p = sub.add_parser("score",
                       help="recompute the improvement table from a study results directory")
    p.add_argument("--results", required=True, help="study output directory (with losses.csv)")
    p.add_argument("--baseline", required=True)
    p.add_argument("--out", required=True, help="output CSV; a .md twin is written alongside")

    p = sub.add_parser("export-quantiles",
                       help="fan-chart quantiles from a stored trajectory ensemble")
    p.add_argument("--ensemble", required=True, help="ensemble CSV (.csv or .csv.gz)")
    p.add_argument("--probs", default=DEFAULT_PROBS, help="comma-separated percent levels")
    p.add_argument("--out", required=True)

    p = sub.add_parser("export-corr-path",
                       help="filtered pairwise correlation paths implied by a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--burn-in", type=int, default=10)
    p.add_argument("--out", required=True)
    return parser


def cmd_ingest(args) -> int:
    series = []
    for path in args.input:
        series.extend(ingest_csv(_resolve(path)))
    panel = align_and_join(series, args.join, args.max_gap)
    if args.normalization:
        panel = normalize(panel, parse_normalization_config(_resolve(args.normalization)))
    if args.log:
        panel = to_log(panel)
    panel.to_csv(args.out)
    print(f"ingest: wrote {panel.shape[0]} x {panel.shape[1]} panel ({panel.transform_tag}) to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    if args.params:
        with open(_resolve(args.params), encoding="utf-8") as fh:
            params = ParameterSet.from_dict(json.load(fh)["params"])
    else:
        params = default_params(spec, args.series)
    x0 = None if args.x0 is None else np.full(params.k, args.x0)
    sim = simulate(spec, params, args.length, args.seed, x0=x0)
    emit = args.emit or ("levels" if spec.log_scale else "model")
    panel = sim.panel
    if emit == "levels" and spec.log_scale:
        panel = Panel(panel.dates, np.exp(panel.values), panel.labels, "levels")
    panel.to_csv(args.out)
    sim.truth_to_json(str(args.out) + ".truth.json", spec, params)
    print(f"simulate: wrote {panel.shape[0]} x {panel.shape[1]} panel to {args.out} (seed {args.seed})")
    return EXIT_OK


def cmd_fit(args) -> int:
    spec = _spec_from_args(args)
    panel = _load_panel(args.data)
    if spec.log_scale:
        panel = to_log(panel)
    opts = FitOptions(maxiter=args.maxiter, gtol=args.gtol, min_obs=args.min_obs,
                      compute_stderr=args.stderr, init=InitPolicy(burn_in=args.burn_in))
    res = fit(panel, spec, opts)
    res.to_json(args.out)
    print(f"fit: loglik {res.loglik:.4f}, {res.iterations} iterations, "
          f"converged={res.converged}, wrote {args.out}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    fit_res = FitResult.from_json(_resolve(args.fit))
    spec = fit_res.spec
    panel = _load_panel(args.data)
    data = to_log(panel) if spec.log_scale else panel
    fr = filter_pass(data, spec, fit_res.params, InitPolicy())
    state = fr.end_state(data)
    ens = forecast(state, fit_res.params, spec, args.horizon, args.trajectories,
                   seed=args.seed, mode=args.mode)
    ens = ens.to_levels(args.cap, spec.log_scale)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    ens.to_csv(outdir / "ensemble.csv.gz")
    probs = _parse_probs(args.probs)
    summary = summarize(ens, probs)
    summary.to_json(outdir / "summary.json")
    with open(outdir / "cap_report.json", "w", encoding="utf-8") as fh:
        json.dump({"cap": args.cap, "cap_applied": ens.cap_applied,
                   "n_cells": int(ens.trajectories.size)}, fh, indent=2)
        fh.write("\n")
    print(f"forecast: {args.trajectories} x {args.horizon} trajectories from {state.origin_date}, "
          f"capped {ens.cap_applied} cells, wrote {outdir}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    panel = _load_panel(args.data)
    cfg = StudyConfig.from_file(_resolve(args.config))
    result = run_study(panel, cfg, outdir=args.out_dir, jobs=args.jobs)
    rate = result.manifest["failure_rate"]
    print(f"backtest: {result.manifest['n_tasks']} tasks, failure rate {rate:.1%}, "
          f"wrote {args.out_dir}")
    return EXIT_OK if result.ok else EXIT_PARTIAL


def cmd_score(args) -> int:
    from .scoring import improvement_table, table_to_markdown

    losses = pd.read_csv(Path(_resolve(args.results)) / "losses.csv")
    reports = []
    from .scoring import ScoreReport

    for (model, metric, scope), grp in losses.groupby(["model", "metric", "scope"], sort=False):
        vals = grp["loss"].to_numpy()
        value = float(np.sqrt(vals.mean())) if metric == "RMSE" else float(vals.mean())
        horizon = _horizon_from_scope(scope)
        reports.append(ScoreReport(model_id=model, metric=metric, scope=scope, value=value,
                                   horizon=horizon, losses=vals, origins=grp["origin"].to_numpy()))
    table = improvement_table(reports, args.baseline)
    table.to_csv(args.out, index=False, float_format="%.17g")
    md_path = Path(args.out).with_suffix(".md")
    with open(md_path, "w", encoding="utf-8") as fh:
        for metric in ("ES", "CRPS", "RMSE"):
            if (table["metric"] == metric).any():
                fh.write(f"## {metric}\n\n" + table_to_markdown(table, metric) + "\n")
    print(f"score: {len(table)} rows, wrote {args.out} and {md_path}")
    return EXIT_OK


def _horizon_from_scope(scope: str) -> int:
    hor = scope.split("|H")[-1]
    if "-" in hor:
        return int(hor.split("-")[-1])
    return max(int(h) for h in hor.split("+"))


def _parse_probs(text: str) -> np.ndarray:
    try:
        probs = np.array([float(x) / 100.0 for x in text.split(",") if x.strip()])
    except ValueError:
        raise ValidationError(f"cannot parse quantile levels {text!r}") from None
    if probs.size == 0 or np.any((probs <= 0) | (probs >= 1)):
        raise ValidationError("quantile levels must lie strictly between 0 and 100 percent")
    return probs


def cmd_export_quantiles(args) -> int:
    ens = ForecastEnsemble.from_csv(_resolve(args.ensemble))
    probs = _parse_probs(args.probs)
    summary = summarize(ens, probs)
    cols = {}
    for k, label in enumerate(summary.labels):
        cols[f"{label}_mean"] = summary.mean[:, k]
        for i, pr in enumerate(summary.probs):
            cols[f"{label}_q{100 * pr:g}"] = summary.quantiles[i, :, k]
    df = pd.DataFrame(cols, index=pd.RangeIndex(1, summary.mean.shape[0] + 1, name="step"))
    df.to_csv(args.out, float_format="%.17g")
    print(f"export-quantiles: wrote {df.shape[0]} steps x {df.shape[1]} columns to {args.out}")
    return EXIT_OK


def cmd_export_corr_path(args) -> int:
    fit_res = FitResult.from_json(_resolve(args.fit))
    spec = fit_res.spec
    panel = _load_panel(args.data)
    data = to_log(panel) if spec.log_scale else panel
    fr = filter_pass(data, spec, fit_res.params, InitPolicy(burn_in=args.burn_in))
    path, pairs = correlation_path(fr.corr)
    labels = data.labels
    cols = {f"{labels[i]}~{labels[j]}": path[:, idx] for idx, (i, j) in enumerate(pairs)}
    df = pd.DataFrame(cols, index=pd.DatetimeIndex(fr.dates, name="date"))
    df.to_csv(args.out, float_format="%.17g")
    print(f"export-corr-path: wrote {df.shape[0]} rows x {df.shape[1]} pairs to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "ingest": cmd_ingest,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "score": cmd_score,
    "export-quantiles": cmd_export_quantiles,
    "export-corr-path": cmd_export_corr_path,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except ValidationError as exc:
        print(f"vcg {args.verb}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"vcg {args.verb}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"vcg {args.verb}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
