"""Experiment configuration and the pipeline commands behind the CLI."""

from .experiment import DataConfig, ExperimentConfig, preset_config, resolve_config
from .commands import COMMANDS, RunContext, evaluate_model, load_split, run

__all__ = [
    'DataConfig',
    'ExperimentConfig',
    'preset_config',
    'resolve_config',
    'COMMANDS',
    'RunContext',
    'evaluate_model',
    'load_split',
    'run'
]
