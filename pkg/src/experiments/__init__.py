"""Experiment configuration, run persistence and CLI commands."""

from .experiment_config import ExperimentConfig, build_config
from .persistence import RunDirectory

__all__ = ['ExperimentConfig', 'build_config', 'RunDirectory']
