"""Experiment plumbing: configs, synthetic data, persistence and the CLI."""
from .config import TASKS, ExperimentConfig, config_from_dict, load_config
from .data import SpikeDataset, SyntheticTaskSpec, generate_task
from .io import load_model, save_model

__all__ = [
    "TASKS", "ExperimentConfig", "config_from_dict", "load_config",
    "SpikeDataset", "SyntheticTaskSpec", "generate_task", "load_model", "save_model",
]
