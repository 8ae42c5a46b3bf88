"""Command-line interface: verbs, outputs, exit codes, idempotence."""

import gzip
import json

import numpy as np
import pandas as pd
import pytest

from vcg.cli import main

RW_FLAGS = ["--no-short-run", "--no-time-varying-sigma", "--no-time-varying-rho"]


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Shared fixture directory: simulated panel + fit, built via the CLI."""
    root = tmp_path_factory.mktemp("cli")
    rc = run(["simulate", "-T", "400", "--seed", "4", *RW_FLAGS,
              "--out", str(root / "panel.csv")])
    assert rc == 0
    rc = run(["fit", "--data", str(root / "panel.csv"), *RW_FLAGS,
              "--min-obs", "200", "--out", str(root / "fit.json")])
    assert rc == 0
    return root


def test_simulate_deterministic_output(tmp_path):
    for name in ("a.csv", "b.csv"):
        rc = run(["simulate", "-T", "10", "--seed", "1", *RW_FLAGS, "--out", str(tmp_path / name)])
        assert rc == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len((tmp_path / "a.csv").read_text().splitlines()) == 11  # header + T rows
    truth = json.loads((tmp_path / "a.csv.truth.json").read_text())
    assert truth["seed"] == 1


def test_fit_output_converged(workdir):
    doc = json.loads((workdir / "fit.json").read_text())
    assert doc["schema_version"] == 1
    assert doc["converged"] is True
    assert doc["spec"]["sigma_time_varying"] is False
    assert set(doc["params"]) == {"vecm", "garch", "marginals", "copula"}


def test_fit_idempotent(workdir, tmp_path):
    rc = run(["fit", "--data", str(workdir / "panel.csv"), *RW_FLAGS,
              "--min-obs", "200", "--out", str(tmp_path / "fit2.json")])
    assert rc == 0
    assert (tmp_path / "fit2.json").read_bytes() == (workdir / "fit.json").read_bytes()


def test_forecast_outputs(workdir, tmp_path):
    out = tmp_path / "fc"
    rc = run(["forecast", "--fit", str(workdir / "fit.json"), "--data", str(workdir / "panel.csv"),
              "--horizon", "5", "--trajectories", "64", "--seed", "7", "--out-dir", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["mean"]) == 5
    cap = json.loads((out / "cap_report.json").read_text())
    assert cap["cap_applied"] == 0
    df = pd.read_csv(out / "ensemble.csv.gz")
    assert set(df.columns) == {"origin", "trajectory", "step", "series", "value"}
    assert len(df) == 64 * 5 * 2


def test_forecast_idempotent_bytes(workdir, tmp_path):
    outs = []
    for name in ("f1", "f2"):
        out = tmp_path / name
        rc = run(["forecast", "--fit", str(workdir / "fit.json"), "--data", str(workdir / "panel.csv"),
                  "--horizon", "3", "--trajectories", "32", "--seed", "9", "--out-dir", str(out)])
        assert rc == 0
        outs.append(out)
    assert (outs[0] / "ensemble.csv.gz").read_bytes() == (outs[1] / "ensemble.csv.gz").read_bytes()
    assert (outs[0] / "summary.json").read_bytes() == (outs[1] / "summary.json").read_bytes()


def test_export_quantiles_columns(workdir, tmp_path):
    out = tmp_path / "fc"
    run(["forecast", "--fit", str(workdir / "fit.json"), "--data", str(workdir / "panel.csv"),
         "--horizon", "4", "--trajectories", "32", "--seed", "2", "--out-dir", str(out)])
    rc = run(["export-quantiles", "--ensemble", str(out / "ensemble.csv.gz"),
              "--probs", "1,25,50,75,99", "--out", str(tmp_path / "q.csv")])
    assert rc == 0
    df = pd.read_csv(tmp_path / "q.csv", index_col="step")
    for label in ("x0", "x1"):
        qcols = [c for c in df.columns if c.startswith(f"{label}_q")]
        assert len(qcols) == 5
    assert len(df) == 4


def test_export_corr_path_constant(workdir, tmp_path):
    rc = run(["export-corr-path", "--fit", str(workdir / "fit.json"),
              "--data", str(workdir / "panel.csv"), "--out", str(tmp_path / "corr.csv")])
    assert rc == 0
    df = pd.read_csv(tmp_path / "corr.csv", index_col="date")
    assert list(df.columns) == ["x0~x1"]
    assert df["x0~x1"].nunique() == 1  # constant-dependence fit


def test_ingest_normalize_log(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text("date,gas,coal\n2020-01-01,30,60\n2020-01-02,33,66\n2020-01-03,36,72\n")
    cfg = tmp_path / "norm.cfg"
    cfg.write_text("factor.gas = 2.0\nfactor.coal = 3.0\nhicp.2020-01 = 100.0\n")
    rc = run(["ingest", "--input", str(raw), "--normalization", str(cfg),
              "--log", "--out", str(tmp_path / "panel.csv")])
    assert rc == 0
    df = pd.read_csv(tmp_path / "panel.csv", index_col=0)
    np.testing.assert_allclose(df.iloc[0], [np.log(15.0), np.log(20.0)])


def test_backtest_and_score(workdir, tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("\n".join([
        "[study]",
        "window = 150",
        "horizon = 3",
        "origins = 2",
        "trajectories = 32",
        "seed = 11",
        "fit_maxiter = 40",
        "fit_min_obs = 100",
        "[spec base]",
        "short_run = false",
        "sigma_time_varying = false",
        "rho_time_varying = false",
        "",
    ]))
    out = tmp_path / "study"
    rc = run(["backtest", "--data", str(workdir / "panel.csv"), "--config", str(cfg),
              "--out-dir", str(out)])
    assert rc == 0
    scores = pd.read_csv(out / "scores.csv")
    assert (scores["improvement_pct"] == 0).all()  # single baseline spec

    rc = run(["score", "--results", str(out), "--baseline", "base",
              "--out", str(tmp_path / "rescored.csv")])
    assert rc == 0
    rescored = pd.read_csv(tmp_path / "rescored.csv")
    merged = scores.merge(rescored, on=["model", "metric", "scope"], suffixes=("_a", "_b"))
    np.testing.assert_allclose(merged["score_a"], merged["score_b"], rtol=1e-12)
    assert (tmp_path / "rescored.md").exists()


def test_help_on_every_verb(capsys):
    for verb in ("ingest", "simulate", "fit", "forecast", "backtest", "score",
                 "export-quantiles", "export-corr-path"):
        with pytest.raises(SystemExit) as exc:
            run([verb, "--help"])
        assert exc.value.code == 0
        assert "--" in capsys.readouterr().out


def test_unknown_flag_is_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["fit", "--data", "x.csv", "--not-a-flag"])
    assert exc.value.code == 1


def test_missing_file_exit_code():
    assert run(["fit", "--data", "/nonexistent.csv", "--out", "/tmp/x.json"]) == 1


def test_validation_error_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,a\n2020-01-01,1\n2020-01-01,2\n")
    rc = run(["ingest", "--input", str(bad), "--out", str(tmp_path / "p.csv")])
    assert rc == 1
