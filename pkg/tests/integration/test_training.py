"""
Integration tests: a short denoising score-matching run learns the exact
empirical score of a two-atom sample well enough to beat the zero predictor.
"""

import numpy as np
import pytest

from src.ml.dsm_trainer import DSMTrainer, TimeGrid, TrainConfig
from src.ml.sampler import SampleConfig, generate
from src.ml.score_net import NetSpec, make_specs
from src.utils.rng_utils import stream


@pytest.fixture(scope="module")
def two_atom_data():
    return np.repeat([[0.3], [0.7]], 32, axis=0)


@pytest.mark.integration
@pytest.mark.slow
class TestShortTraining:
    """Training against the kernel target reduces the score error."""

    def test_beats_zero_predictor(self, two_atom_data):
        grid = TimeGrid.from_endpoints(0.01, 0.02)
        cfg = TrainConfig(steps=600, batch=128, lr=3e-3, seed=0, n_test=2048, log_every=100)
        trainer = DSMTrainer(two_atom_data, grid, cfg)
        untrained = trainer.start_interval(1, NetSpec.uniform(1, 2, 32)).model
        before = trainer.interval_test_error(untrained, stream(0, "check"))

        model, log = trainer.train_interval(1, NetSpec.uniform(1, 2, 32))
        after = trainer.interval_test_error(model, stream(0, "check"))
        assert after["test_error"] < 0.5 * after["exact_sq_norm"]
        assert after["test_error"] < before["test_error"]
        assert len(log) == 6

    def test_learned_sampler_runs(self, two_atom_data):
        grid = TimeGrid.from_endpoints(0.02, 0.32)
        cfg = TrainConfig(steps=50, batch=64, seed=1, n_test=64)
        score = DSMTrainer(two_atom_data, grid, cfg).train_all(make_specs(1, grid.K_intervals, depth=1, width=16))
        x = generate(SampleConfig(score=score, D=1, grid=grid, n_samples=200, substeps_per_interval=4, seed=1))
        assert x.shape == (200, 1)
        assert np.all((x >= 0.0) & (x <= 1.0))
