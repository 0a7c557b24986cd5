"""Experiment orchestration: configs, data, persistence, runner, CLI."""

from .arrayio import load_array, read_array, save_array, write_array
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config, parse_config
from .data import PhantomSpec, ingest_directory, synthesize_dataset
from .runner import run_experiment, run_sweep

__all__ = [
    "ExperimentConfig",
    "PhantomSpec",
    "ingest_directory",
    "load_array",
    "load_checkpoint",
    "load_config",
    "parse_config",
    "read_array",
    "run_experiment",
    "run_sweep",
    "save_array",
    "save_checkpoint",
    "synthesize_dataset",
    "write_array",
]
