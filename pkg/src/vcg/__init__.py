"""Probabilistic multivariate forecasting of commodity price panels.

A vector-error-correction conditional mean, asymmetric univariate GARCH
conditional variances and a t-copula with optionally time-varying pairwise
dependence, estimated jointly by maximum likelihood, with simulation-based
multi-step forecasting, proper-scoring evaluation and a rolling-window
backtest harness.
"""

__version__ = "0.1.0"

from .errors import NumericalError, ValidationError
from .panel import (
    NormalizationConfig,
    Panel,
    RawSeries,
    align_and_join,
    cap_exponentiated,
    ingest_csv,
    normalize,
    to_log,
)
from .marginals import MarginalParams, base_moments
from .meanvol import FilterResult, FilterState, GarchParams, InitPolicy, VecmParams, filter_pass, garch_update, vecm_mean
from .copula import CopulaParams, DependenceState, copula_density, copula_sample, correlation_from_latent, latent_update
from .modelspec import MarginalShape, ModelSpec, ParameterSet
from .estimation import FitOptions, FitResult, fit, gradient, log_likelihood, transform_parameters
from .forecasting import ForecastEnsemble, ForecastSummary, correlation_path, forecast, summarize
from .scoring import ScoreReport, Scope, crps, dm_test, energy_score, improvement_table, multiscope_es, rmse
from .backtest import StudyConfig, StudyResult, run_study, sample_origins
from .simulate import SimulationResult, default_params, simulate

__all__ = [
    "__version__",
    "NumericalError",
    "ValidationError",
    "NormalizationConfig",
    "Panel",
    "RawSeries",
    "align_and_join",
    "cap_exponentiated",
    "ingest_csv",
    "normalize",
    "to_log",
    "MarginalParams",
    "base_moments",
    "FilterResult",
    "FilterState",
    "GarchParams",
    "InitPolicy",
    "VecmParams",
    "filter_pass",
    "garch_update",
    "vecm_mean",
    "CopulaParams",
    "DependenceState",
    "copula_density",
    "copula_sample",
    "correlation_from_latent",
    "latent_update",
    "MarginalShape",
    "ModelSpec",
    "ParameterSet",
    "FitOptions",
    "FitResult",
    "fit",
    "gradient",
    "log_likelihood",
    "transform_parameters",
    "ForecastEnsemble",
    "ForecastSummary",
    "correlation_path",
    "forecast",
    "summarize",
    "ScoreReport",
    "Scope",
    "crps",
    "dm_test",
    "energy_score",
    "improvement_table",
    "multiscope_es",
    "rmse",
    "StudyConfig",
    "StudyResult",
    "run_study",
    "sample_origins",
    "SimulationResult",
    "default_params",
    "simulate",
]
