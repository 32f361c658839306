"""
Unit tests for the time grid, the denoising loss and the per-interval
trainer (divergence, resume, zero-step runs) and the piecewise estimator.
"""

import math

import numpy as np
import pytest

from src.ml import dsm_trainer
from src.ml.dsm_trainer import (
    DSMTrainer,
    PiecewiseScore,
    TimeGrid,
    TrainConfig,
    dsm_loss_sample,
    theorem_architecture,
    theorem_grid,
)
from src.ml.score_net import NetSpec, ScoreModel, make_specs
from src.utils.errors import ConfigurationError, DivergenceError, DomainError


@pytest.fixture
def data(rng):
    return rng.uniform(0.2, 0.8, size=(20, 1))


def small_spec():
    return NetSpec.uniform(1, 1, 8)


@pytest.mark.unit
class TestTimeGrid:
    """Test the geometric grid."""

    def test_endpoints_are_exact(self):
        grid = TimeGrid.from_endpoints(1e-3, 4.0, c_max=2.0)
        assert grid.K_intervals == 12
        assert grid.times[0] == 1e-3
        assert grid.times[-1] == 4.0
        assert grid.c <= 2.0
        np.testing.assert_allclose(np.diff(np.log(grid.times)), math.log(grid.c))

    def test_interval_lookup(self):
        grid = TimeGrid.from_endpoints(0.25, 1.0)
        times = grid.times
        assert grid.K_intervals == 2
        assert grid.interval_of(0.25) == 1
        assert grid.interval_of(times[1]) == 2
        assert grid.interval_of(0.4) == 1
        assert grid.interval_of(1.0) == 2
        assert grid.interval_of(1e-6) == 1

    def test_bounds(self):
        grid = TimeGrid.from_endpoints(0.25, 1.0)
        assert grid.bounds(2) == (0.5, 1.0)
        with pytest.raises(DomainError):
            grid.bounds(3)

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            TimeGrid.from_endpoints(1.0, 0.5)
        with pytest.raises(ConfigurationError):
            TimeGrid.from_endpoints(0.1, 1.0, c_max=3.0)
        with pytest.raises(ConfigurationError):
            TimeGrid(T_lo=0.1, T_hi=1.0, c=2.0, K_intervals=2)


@pytest.mark.unit
class TestTheoremPresets:
    """Test endpoints and architectures scaled with n."""

    def test_grid_endpoints(self):
        grid = theorem_grid(n=1000, D=1, d=1, alpha=1.0)
        assert grid.T_lo == pytest.approx(1e-4)
        expected_hi = (8 / math.pi ** 2) * math.log((8 / math.pi) * 100.0)
        assert grid.T_hi == pytest.approx(expected_hi)

    def test_grid_shrinks_with_n(self):
        assert theorem_grid(10_000, 2, 1, 1.0).T_lo < theorem_grid(100, 2, 1, 1.0).T_lo

    def test_architecture_limits(self):
        grid = theorem_grid(1000, 1, 1, 1.0)
        depth, widths = theorem_architecture(grid, 1000, 1, 1.0, max_width=64, max_depth=4)
        assert 2 <= depth <= 4
        assert len(widths) == grid.K_intervals
        assert all(8 <= w <= 64 for w in widths)
        assert widths[0] >= widths[-1]


@pytest.mark.unit
class TestDSMLoss:

    def test_nonnegative_and_seeded(self, data):
        grid = TimeGrid.from_endpoints(0.01, 0.04)

        def zero(x, t):
            return np.zeros_like(x)

        first = dsm_loss_sample(zero, data[0], 1, grid, np.random.default_rng(3), n_mc=16)
        second = dsm_loss_sample(zero, data[0], 1, grid, np.random.default_rng(3), n_mc=16)
        assert first == second
        assert first > 0.0


@pytest.mark.unit
class TestTrainer:
    """Test interval runs."""

    def test_zero_steps_leave_model_unchanged(self, data):
        grid = TimeGrid.from_endpoints(0.01, 0.04)
        trainer = DSMTrainer(data, grid, TrainConfig(steps=0, seed=2, n_test=16))
        fresh = trainer.start_interval(1, small_spec()).model
        trained, log = trainer.train_interval(1, small_spec())
        np.testing.assert_array_equal(trained.params, fresh.params)
        assert log == []
        assert "test_error" in trained.meta

    def test_divergence_raises_with_diagnostics(self, data, monkeypatch):
        grid = TimeGrid.from_endpoints(0.01, 0.04)
        trainer = DSMTrainer(data, grid, TrainConfig(steps=3, batch=4, seed=0))

        def broken(y, x, t, **kwargs):
            return np.full_like(x, np.nan)

        monkeypatch.setattr(dsm_trainer, "grad_log_q", broken)
        with pytest.raises(DivergenceError) as info:
            trainer.train_interval(2, small_spec())
        assert info.value.diagnostics["interval"] == 2
        assert info.value.diagnostics["step"] == 0

    def test_steps_change_parameters_and_log(self, data):
        grid = TimeGrid.from_endpoints(0.01, 0.04)
        trainer = DSMTrainer(data, grid, TrainConfig(steps=4, batch=8, log_every=2, seed=1, n_test=16))
        model, log = trainer.train_interval(1, small_spec())
        assert [row["step"] for row in log] == [2, 4]
        assert all(np.isfinite(row["loss"]) for row in log)
        assert model.meta["steps_done"] == 4
        assert model.meta["final_loss"] == log[-1]["loss"]

    def test_resume_matches_uninterrupted(self, data, tmp_path):
        """Stopping after 5 steps and resuming gives the same parameters as 10 straight steps."""
        grid = TimeGrid.from_endpoints(0.01, 0.04)
        base = dict(steps=10, batch=8, seed=4, n_test=16, log_every=1)
        straight, _ = DSMTrainer(data, grid, TrainConfig(**base)).train_interval(1, small_spec())

        DSMTrainer(data, grid, TrainConfig(stop_after=5, **base)).train_interval(
            1, small_spec(), checkpoint_dir=tmp_path
        )
        resumed, log = DSMTrainer(data, grid, TrainConfig(**base)).train_interval(
            1, small_spec(), checkpoint_dir=tmp_path, resume=True
        )
        np.testing.assert_array_equal(resumed.params, straight.params)
        assert [row["step"] for row in log] == list(range(1, 11))

    def test_seeded_training_repeats(self, data):
        grid = TimeGrid.from_endpoints(0.01, 0.04)
        cfg = TrainConfig(steps=3, batch=8, seed=9, n_test=16)
        a, _ = DSMTrainer(data, grid, cfg).train_interval(1, small_spec())
        b, _ = DSMTrainer(data, grid, cfg).train_interval(1, small_spec())
        np.testing.assert_array_equal(a.params, b.params)

    def test_fixed_panel(self, data):
        grid = TimeGrid.from_endpoints(0.01, 0.04)
        cfg = TrainConfig(steps=3, batch=8, seed=9, n_test=16, fixed_panel=True, panel_size=32)
        trainer = DSMTrainer(data, grid, cfg)
        run = trainer.run_interval(trainer.start_interval(1, small_spec()))
        assert run.panel["index"].shape == (32,)
        assert run.steps_done == 3

    def test_train_all(self, data, tmp_path):
        grid = TimeGrid.from_endpoints(0.01, 0.04)
        cfg = TrainConfig(steps=2, batch=8, seed=0, n_test=16)
        score = DSMTrainer(data, grid, cfg).train_all(make_specs(1, 2, depth=1, width=8), checkpoint_dir=tmp_path)
        assert len(score.models) == 2
        assert np.isfinite(score.report["weighted_error"])
        assert sorted(p.name for p in tmp_path.glob("*.ckpt")) == ["interval_1.ckpt", "interval_2.ckpt"]

    def test_spec_count_checked(self, data):
        grid = TimeGrid.from_endpoints(0.01, 0.04)
        with pytest.raises(ConfigurationError):
            DSMTrainer(data, grid, TrainConfig(steps=1)).train_all([small_spec()])

    def test_invalid_config(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(optimizer="lbfgs")
        with pytest.raises(ConfigurationError):
            TrainConfig(lr=0.0)


@pytest.mark.unit
class TestPiecewiseScore:
    """Test the interval dispatch and persistence of the estimator."""

    def make_score(self):
        grid = TimeGrid.from_endpoints(0.25, 1.0)
        models = [
            ScoreModel.initialize(small_spec(), grid.bounds(i), 50, np.random.default_rng(i))
            for i in (1, 2)
        ]
        return PiecewiseScore(grid=grid, models=models)

    def test_dispatch(self):
        score = self.make_score()
        x = np.array([[0.4], [0.6]])
        np.testing.assert_array_equal(score(x, 0.3), score.models[0].forward(x, 0.3))
        np.testing.assert_array_equal(score(x, 0.5), score.models[1].forward(x, 0.5))
        np.testing.assert_array_equal(score(x, 0.5, interval=1), score.models[0].forward(x, 0.5))

    def test_weighted_error(self):
        score = self.make_score()
        assert math.isnan(score.weighted_error())
        score.models[0].meta["test_error"] = 4.0
        score.models[1].meta["test_error"] = 9.0
        assert score.weighted_error() == pytest.approx(math.sqrt(0.5) * 2.0 + 3.0)

    def test_save_load(self, tmp_path):
        score = self.make_score()
        score.save(tmp_path)
        loaded = PiecewiseScore.load(tmp_path)
        assert loaded.grid == score.grid
        for a, b in zip(loaded.models, score.models):
            assert a.params.tobytes() == b.params.tobytes()

    def test_load_empty_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            PiecewiseScore.load(tmp_path)

    def test_model_count_checked(self):
        score = self.make_score()
        with pytest.raises(ConfigurationError):
            PiecewiseScore(grid=score.grid, models=score.models[:1])
