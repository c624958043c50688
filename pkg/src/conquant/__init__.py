"""Conformalised one-sided quantile estimation on top of linear quantile
regression and quantile random forests, with a time-series simulation harness
and a Growth-at-Risk backtest pipeline."""

from . import artifacts, conformal, dgp, errors, evaluation, experiments, gar
from .conformal import (
    ConformalQuantileEstimator,
    conformalize_lower,
    conformalize_upper,
    cqr_interval,
    make_split,
    score_quantile,
)
from .experiments import ExperimentConfig, run_experiment
from .gar import BacktestConfig, load_macro_csv, run_backtest
from .quantile_models import (
    QrfConfig,
    SupervisedSet,
    fit_qr,
    fit_qrf,
    predict_quantile,
)

__version__ = "0.1.0"

__all__ = [
    "BacktestConfig",
    "ConformalQuantileEstimator",
    "ExperimentConfig",
    "QrfConfig",
    "SupervisedSet",
    "artifacts",
    "conformal",
    "conformalize_lower",
    "conformalize_upper",
    "cqr_interval",
    "dgp",
    "errors",
    "evaluation",
    "experiments",
    "fit_qr",
    "fit_qrf",
    "gar",
    "load_macro_csv",
    "make_split",
    "predict_quantile",
    "run_backtest",
    "run_experiment",
    "score_quantile",
]
