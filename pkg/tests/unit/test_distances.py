"""
Unit tests for sample distances, total variation to the uniform law and
tube membership.
"""

import math

import numpy as np
import pytest

from src.diffusion.targets import make_empirical_target
from src.metrics.distances import (
    LP_MAX_POINTS,
    distance_to_support,
    exact_w1_lp,
    in_tube,
    random_directions,
    sliced_w1,
    tube_radius,
    tv_to_uniform,
    w1_1d,
)
from src.utils.errors import ConfigurationError, DomainError, UnsupportedError


@pytest.mark.unit
class TestW1OneDimensional:
    """Test the quantile-coupling W1."""

    def test_known_values(self):
        assert w1_1d([0.0], [1.0]) == 1.0
        assert w1_1d([0.0, 1.0], [0.5, 0.5]) == 0.5
        assert w1_1d([0.2, 0.7, 0.1], [0.7, 0.1, 0.2]) == 0.0

    def test_unequal_sizes(self):
        """Quantile functions integrated piecewise."""
        assert w1_1d([0.0, 1.0], [0.0, 0.0, 1.0, 1.0]) == pytest.approx(0.0, abs=1e-15)
        assert w1_1d([0.0], [0.0, 1.0]) == pytest.approx(0.5)

    def test_metric_properties(self, rng):
        for _ in range(100):
            a, b, c = (rng.uniform(size=rng.integers(5, 30)) for _ in range(3))
            assert w1_1d(a, b) == pytest.approx(w1_1d(b, a), abs=1e-15)
            assert w1_1d(a, c) <= w1_1d(a, b) + w1_1d(b, c) + 1e-12
            assert w1_1d(a, a) == 0.0

    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(DomainError):
            w1_1d([], [0.5])
        with pytest.raises(DomainError):
            w1_1d([np.nan], [0.5])


@pytest.mark.unit
class TestSlicedW1:
    """Test the projected W1 proxy."""

    def test_identical_samples(self, rng):
        a = rng.uniform(size=(200, 3))
        assert sliced_w1(a, a.copy(), n_proj=16, rng=rng) == 0.0

    def test_one_dimension_is_exact(self, rng):
        a = rng.uniform(size=(300, 1))
        b = rng.uniform(size=(300, 1)) ** 2
        assert sliced_w1(a, b, n_proj=8, rng=rng) == pytest.approx(w1_1d(a, b), rel=1e-12)

    def test_unequal_sizes_in_one_dimension(self, rng):
        a = rng.uniform(size=(100, 1))
        b = rng.uniform(size=(150, 1))
        assert sliced_w1(a, b, n_proj=4, rng=rng) == pytest.approx(w1_1d(a, b), rel=1e-12)

    def test_translation(self, rng):
        """Shifting a cloud by v gives E|<theta, v>| = |v| E|theta_1|."""
        a = rng.normal(size=(2000, 2))
        v = np.array([0.3, -0.4])
        value = sliced_w1(a, a + v, n_proj=4000, rng=rng)
        assert 2 * np.linalg.norm(v) / math.pi * 0.95 <= value <= np.linalg.norm(v)
        assert value == pytest.approx(np.linalg.norm(v) * 2 / math.pi, rel=0.05)

    def test_seeded(self, rng):
        a = rng.uniform(size=(100, 2))
        b = rng.uniform(size=(100, 2))
        first = sliced_w1(a, b, n_proj=10, rng=np.random.default_rng(1))
        second = sliced_w1(a, b, n_proj=10, rng=np.random.default_rng(1))
        assert first == second

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DomainError):
            sliced_w1(rng.uniform(size=(5, 2)), rng.uniform(size=(5, 3)))

    def test_directions_are_unit(self, rng):
        theta = random_directions(50, 4, rng)
        np.testing.assert_allclose(np.linalg.norm(theta, axis=1), 1.0)
        with pytest.raises(ConfigurationError):
            random_directions(0, 2, rng)


@pytest.mark.unit
class TestExactW1:
    """Test the transport LP."""

    def test_matches_one_dimensional_formula(self, rng):
        a = rng.uniform(size=(40, 1))
        b = rng.uniform(size=(40, 1))
        assert exact_w1_lp(a, b) == pytest.approx(w1_1d(a, b), abs=1e-6)

    def test_two_by_two(self):
        assert exact_w1_lp([[0.0], [1.0]], [[0.5], [0.5]]) == pytest.approx(0.5, abs=1e-10)

    def test_sliced_is_below_exact(self, rng):
        """A projection never increases the transport cost."""
        a = rng.uniform(size=(60, 2))
        b = rng.uniform(size=(60, 2)) * 0.5
        assert sliced_w1(a, b, n_proj=64, rng=rng) <= exact_w1_lp(a, b) + 1e-6

    def test_size_limit(self, rng):
        big = rng.uniform(size=(LP_MAX_POINTS + 1, 1))
        with pytest.raises(ConfigurationError):
            exact_w1_lp(big, big)


@pytest.mark.unit
class TestTotalVariation:
    """Test TV(q_t(x0, .), uniform)."""

    def test_stationary(self):
        assert tv_to_uniform([0.3], 10.0) < 1e-8

    def test_below_spectral_bound(self):
        bound = 4.0 / math.pi * math.exp(-math.pi ** 2 * 0.5 / 2)
        assert bound == pytest.approx(0.1082, abs=1e-4)
        assert tv_to_uniform([0.5], 0.5) <= bound

    def test_first_mode_value(self):
        """At moderate t only the first cosine mode matters."""
        t = 1.0
        expected = (2.0 / math.pi) * math.exp(-math.pi ** 2 * t / 2)
        assert tv_to_uniform([0.0], t) == pytest.approx(expected, rel=1e-3)

    def test_monotone_in_time(self):
        values = [tv_to_uniform([0.25], t) for t in (0.25, 0.5, 1.0)]
        assert values[0] >= values[1] >= values[2]
        assert all(0.0 <= v <= 1.0 for v in values)

    def test_two_dimensions(self):
        value = tv_to_uniform([0.1, 0.8], 0.2, n_nodes_2d=129)
        assert 0.0 < value < 1.0
        assert tv_to_uniform([0.1, 0.8], 0.4, n_nodes_2d=129) < value

    def test_three_dimensions_unsupported(self):
        with pytest.raises(UnsupportedError):
            tv_to_uniform([0.5, 0.5, 0.5], 0.1)


@pytest.mark.unit
class TestTube:
    """Test fattened-support membership."""

    def test_radius(self):
        assert tube_radius(0.01, 2, 3.0) == pytest.approx(math.sqrt(0.08))
        with pytest.raises(DomainError):
            tube_radius(-1.0, 1, 1.0)

    def test_empirical_distance(self):
        target = make_empirical_target([[0.2, 0.2], [0.8, 0.8]])
        d = distance_to_support(np.array([[0.2, 0.5], [0.8, 0.8]]), target)
        np.testing.assert_allclose(d, [0.3, 0.0])

    def test_segment_distance(self, segment_target):
        frame = segment_target.frame
        A = frame.A[:, 0]
        normal = np.array([-A[1], A[0]])
        centre = frame.to_ambient(segment_target.center)
        beyond = centre + (segment_target.radius + 0.03) * A + 0.04 * normal
        d = distance_to_support(np.vstack([centre + 0.02 * normal, beyond]), segment_target)
        np.testing.assert_allclose(d, [0.02, 0.05], atol=1e-12)

    def test_membership(self, two_atom):
        t = 0.01
        r = tube_radius(t, 1, 2.0)
        x = np.array([[0.3 - 0.9 * r], [0.3 - 1.1 * r]])
        np.testing.assert_array_equal(in_tube(x, two_atom, t, 2.0), [True, False])
