"""
Unit tests for the flat-vector optimizers.
"""

import numpy as np
import pytest

from src.ml.optimizers import SGD, Adam, make_optimizer
from src.utils.errors import ConfigurationError


@pytest.mark.unit
class TestSGD:

    def test_step(self):
        params = np.array([1.0, -2.0])
        opt = SGD(lr=0.5)
        opt.step(params, np.array([2.0, 2.0]))
        np.testing.assert_array_equal(params, [0.0, -3.0])
        assert opt.state_dict()["step_count"] == 1

    def test_minimizes_quadratic(self):
        params = np.array([3.0, -1.0])
        opt = SGD(lr=0.1)
        for _ in range(200):
            opt.step(params, 2 * params)
        np.testing.assert_allclose(params, 0.0, atol=1e-12)


@pytest.mark.unit
class TestAdam:
    """Test the bias-corrected Adam update."""

    def test_first_step_is_lr_times_sign(self):
        params = np.zeros(3)
        opt = Adam(lr=0.01)
        opt.step(params, np.array([5.0, -0.2, 1e3]))
        np.testing.assert_allclose(params, [-0.01, 0.01, -0.01], rtol=1e-6)

    def test_minimizes_quadratic(self):
        params = np.array([1.0, -2.0, 0.5])
        opt = Adam(lr=0.05)
        for _ in range(2000):
            opt.step(params, 2 * params)
        assert np.abs(params).max() < 1e-2

    def test_state_round_trip_resumes_identically(self):
        grads = np.random.default_rng(0).standard_normal((10, 4))
        a_params = np.ones(4)
        a = Adam(lr=0.01)
        for g in grads:
            a.step(a_params, g)

        b_params = np.ones(4)
        b = Adam(lr=0.01)
        for g in grads[:5]:
            b.step(b_params, g)
        c = Adam(lr=0.01)
        c.load_state_dict(b.state_dict())
        for g in grads[5:]:
            c.step(b_params, g)
        np.testing.assert_array_equal(a_params, b_params)

    def test_invalid_betas(self):
        with pytest.raises(ConfigurationError):
            Adam(lr=0.01, beta1=1.0)


@pytest.mark.unit
class TestFactory:

    def test_by_name(self):
        assert isinstance(make_optimizer("SGD", 0.1), SGD)
        assert isinstance(make_optimizer("adam", 0.1), Adam)

    def test_unknown_name(self):
        with pytest.raises(ConfigurationError, match="unknown optimizer"):
            make_optimizer("rmsprop", 0.1)

    def test_non_positive_lr(self):
        with pytest.raises(ConfigurationError):
            make_optimizer("sgd", 0.0)
