"""
Unit tests for forward reflected Brownian motion and local-time estimates.
"""

import numpy as np
import pytest
from scipy import stats

from src.diffusion.cube_geometry import fold
from src.diffusion.forward_sim import (
    PathSample,
    occupation_local_time,
    sample_marginal,
    simulate_forward,
    simulate_paths,
    simulate_paths_parallel,
)
from src.metrics.distances import w1_1d
from src.utils.errors import DomainError


@pytest.mark.unit
class TestSimulateForward:
    """Test exact path simulation through folding."""

    def test_time_zero_returns_start(self, rng):
        path = simulate_forward([0.3, 0.8], [0.0], rng)
        np.testing.assert_array_equal(path.positions[0], [0.3, 0.8])

    def test_positions_are_folded_driver(self, rng):
        path = simulate_forward([0.5], [0.0, 0.1, 1.0, 5.0], rng)
        assert path.positions.shape == (4, 1)
        assert path.positions.min() >= 0.0 and path.positions.max() <= 1.0
        np.testing.assert_array_equal(fold(path.driver), path.positions)

    def test_driver_can_be_dropped(self, rng):
        assert simulate_forward([0.5], [0.1], rng, keep_driver=False).driver is None

    def test_invalid_inputs(self, rng):
        with pytest.raises(DomainError):
            simulate_forward([1.5], [0.1], rng)
        with pytest.raises(DomainError):
            simulate_forward([0.5], [0.2, 0.1], rng)
        with pytest.raises(DomainError):
            simulate_forward([0.5], [-0.1, 0.1], rng)
        with pytest.raises(DomainError):
            simulate_forward([0.5], [], rng)

    def test_stationary_uniform_at_large_time(self, rng):
        """At t = 10 the marginal is uniform whatever the start."""
        x = simulate_paths(np.full((100_000, 1), 0.1), [10.0], rng)[:, 0, 0]
        assert stats.kstest(x, "uniform").statistic < 0.01

    def test_small_time_variance(self, rng):
        """Images are negligible at t = 0.01 from the centre."""
        x = simulate_paths(np.full((100_000, 1), 0.5), [0.01], rng)[:, 0, 0]
        assert np.var(x) == pytest.approx(0.01, abs=5e-4)

    @pytest.mark.parametrize("t", [0.1, 1.0])
    def test_uniform_is_invariant(self, t):
        """Chi-square test of each coordinate on 10 bins, starting uniform."""
        rng = np.random.default_rng(99)
        y0 = rng.uniform(size=(100_000, 2))
        x = simulate_paths(y0, [t], rng)[:, 0, :]
        for i in range(2):
            counts, _ = np.histogram(x[:, i], bins=10, range=(0.0, 1.0))
            assert stats.chisquare(counts).pvalue > 0.001

    def test_parallel_matches_serial(self):
        """Batches and streams do not depend on the worker count."""
        y0 = np.full((10, 2), 0.5)
        serial = simulate_paths_parallel(y0, [0.1, 0.2], seed=3, workers=1, batch_size=4)
        parallel = simulate_paths_parallel(y0, [0.1, 0.2], seed=3, workers=2, batch_size=4)
        assert serial.shape == (10, 2, 2)
        np.testing.assert_array_equal(serial, parallel)


@pytest.mark.unit
class TestSampleMarginal:
    """Test forward marginals started from a target."""

    def test_time_zero_is_target(self, rng, two_atom):
        x = sample_marginal(two_atom, 0.0, 100, rng)
        assert set(np.unique(x)) <= {0.3, 0.7}

    def test_negative_time(self, rng, two_atom):
        with pytest.raises(DomainError):
            sample_marginal(two_atom, -1.0, 10, rng)

    @pytest.mark.parametrize("t", [0.001, 0.01, 0.1])
    def test_early_stopping_distance(self, t, two_atom):
        """W1(target, X_t) <= sqrt(D t) plus sampling slack."""
        rng = np.random.default_rng(5)
        n = 100_000
        forward = sample_marginal(two_atom, t, n, rng)
        reference = sample_marginal(two_atom, 0.0, n, rng)
        slack = 2.0 * 0.4 / np.sqrt(n) * 3
        assert w1_1d(forward[:, 0], reference[:, 0]) <= np.sqrt(t) + slack

    def test_large_time_uniform(self, rng, centre_mass):
        x = sample_marginal(centre_mass, 10.0, 50_000, rng)
        assert stats.kstest(x[:, 0], "uniform").pvalue > 0.001


@pytest.mark.unit
class TestLocalTime:
    """Test the occupation estimate of boundary local time."""

    def test_interior_path_has_zero_local_time(self):
        times = np.linspace(0.0, 1.0, 101)
        path = PathSample(times=times, positions=np.full((101, 2), 0.5))
        assert occupation_local_time(path, eps=0.1) == 0.0

    def test_pinned_path(self):
        """A path held at 0 for tau accumulates tau / (2 eps)."""
        times = np.linspace(0.0, 1.0, 1001)
        positions = np.full((1001, 1), 0.5)
        positions[:200] = 0.0
        path = PathSample(times=times, positions=positions)
        eps = 0.05
        assert occupation_local_time(path, eps) == pytest.approx(0.2 / (2 * eps), rel=1e-9)

    def test_per_coordinate(self):
        times = np.linspace(0.0, 1.0, 11)
        positions = np.tile([1.0, 0.5], (11, 1))
        per_coord = occupation_local_time(PathSample(times, positions), 0.1, per_coordinate=True)
        np.testing.assert_allclose(per_coord, [1.0 / 0.2, 0.0])

    def test_eps_must_be_positive(self):
        path = PathSample(times=np.array([0.0, 1.0]), positions=np.full((2, 1), 0.5))
        with pytest.raises(DomainError):
            occupation_local_time(path, 0.0)

    @pytest.mark.slow
    def test_refinement_consistency(self):
        """Estimates at eps in {0.05, 0.02, 0.01} agree within 15% on a fine path."""
        rng = np.random.default_rng(17)
        times = np.linspace(0.0, 10.0, 1_000_001)
        path = simulate_forward([0.0], times, rng, keep_driver=False)
        estimates = [occupation_local_time(path, eps) for eps in (0.05, 0.02, 0.01)]
        assert max(estimates) / min(estimates) < 1.15
