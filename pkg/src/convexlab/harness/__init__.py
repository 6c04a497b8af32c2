"""Experiment harness: configs, the experiment catalog, reports and the CLI."""

from .config import ExperimentConfig  # noqa: F401
from .experiments import fit_constant, list_experiments, program_bound, run  # noqa: F401
from .report import ExperimentReport, Row  # noqa: F401
