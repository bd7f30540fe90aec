"""Experiment configuration, runners, I/O and the command-line interface."""

from nammd.harness.config import KINDS, ExperimentConfig
from nammd.harness.experiments import run_experiment
from nammd.harness.io import ResultRow, emit_results, load_csv, load_labeled_csv

__all__ = ["KINDS", "ExperimentConfig", "ResultRow", "emit_results", "load_csv", "load_labeled_csv", "run_experiment"]
