"""Configured experiments and their command-line runner."""
from .config import ExperimentConfig, load_config
from .runner import ExperimentResult, bounds_report, oracle_report, run_experiment

__all__ = ["ExperimentConfig", "ExperimentResult", "bounds_report", "load_config",
           "oracle_report", "run_experiment"]
