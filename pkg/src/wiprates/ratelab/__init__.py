"""Rate experiments, configuration and the command-line interface."""

from .config import ConfigError, ExperimentConfig, load_config
from .experiment import (
    CellSummary,
    ExperimentError,
    RateReport,
    build_model,
    decompose,
    run_rate_experiment,
    simulate_cell,
)
from .fitting import Fit, NonPositiveValue, confidence_interval, fit_loglog, fit_loglog_fixed
from .theory import OutOfRegime, Rate, exponent_source, theoretical_exponent

__all__ = [
    "CellSummary",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentError",
    "Fit",
    "NonPositiveValue",
    "OutOfRegime",
    "Rate",
    "RateReport",
    "build_model",
    "confidence_interval",
    "decompose",
    "exponent_source",
    "fit_loglog",
    "fit_loglog_fixed",
    "load_config",
    "run_rate_experiment",
    "simulate_cell",
    "theoretical_exponent",
]
