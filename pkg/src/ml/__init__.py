"""Score networks, denoising score-matching training and backward sampling."""

from .dsm_trainer import DSMTrainer, PiecewiseScore, TimeGrid, TrainConfig
from .sampler import SampleConfig, generate, generate_with_reference
from .score_net import NetSpec, ScoreModel, load_checkpoint, save_checkpoint

__all__ = [
    'DSMTrainer', 'PiecewiseScore', 'TimeGrid', 'TrainConfig',
    'SampleConfig', 'generate', 'generate_with_reference',
    'NetSpec', 'ScoreModel', 'load_checkpoint', 'save_checkpoint',
]
