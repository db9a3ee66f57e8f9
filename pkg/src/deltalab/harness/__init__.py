"""Workloads, experiment runs, reports and the command line."""

from .config import ExperimentConfig, load_config
from .report import emit_report
from .runner import RunReport, bench, generate_workload, run_experiment, sweep

__all__ = ["ExperimentConfig", "RunReport", "bench", "emit_report", "generate_workload",
           "load_config", "run_experiment", "sweep"]
