"""Configuration, rate experiments and the command-line interface."""
from levystein.experiments.config import ConfigError, ExperimentConfig
from levystein.experiments.rates import RateVerdict, emit_plot_data, fit_rate, run_rate_experiment

__all__ = ["ConfigError", "ExperimentConfig", "RateVerdict", "emit_plot_data", "fit_rate", "run_rate_experiment"]
