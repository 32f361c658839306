"""
Integration tests: every bound suite passes on the default two-atom target
with moderate sample counts.
"""

import numpy as np
import pytest

from src.metrics.bound_verifier import SUITES, VerifyContext, run_suite, verify_bounds


@pytest.fixture(scope="module")
def ctx():
    return VerifyContext(n_samples=20_000, n_brownian=200_000, n_paths=1000)


@pytest.mark.integration
class TestBoundSuites:
    """Each suite's validated half satisfies its fitted inequality."""

    @pytest.mark.parametrize("name", list(SUITES))
    def test_suite_passes(self, name, ctx):
        report = run_suite(name, ctx, seed=0)
        assert report.passed, f"{name}: {report.note} C={report.fitted_constant} measured={report.measured}"
        assert len(report.params) == len(report.measured) == len(report.bound)

    def test_truncation_slope(self, ctx):
        """Squared truncation error decays at least like e^(-0.8 K)."""
        report = run_suite("truncation", ctx, seed=0)
        assert report.extra["log_slope"] <= -0.8
        assert report.params == [float(k) for k in range(2, 11)]

    def test_early_stopping_uses_constant_one(self, ctx):
        report = run_suite("early_stopping", ctx, seed=0)
        assert report.fitted_constant == 1.0
        assert report.n_fit == 0
        assert np.all(np.asarray(report.measured) <= np.asarray(report.bound))

    def test_ergodicity_below_spectral_bound(self, ctx):
        report = run_suite("ergodicity", ctx, seed=0)
        assert np.all(np.asarray(report.measured) <= np.asarray(report.bound))
        assert report.extra["x0"][:3] == [0.0, 0.25, 0.5]

    def test_score_bounds_on_two_atoms(self, ctx):
        """Growth and tube bounds on the hard target."""
        reports = verify_bounds(["score_growth", "tube_score"], ctx, seed=0)
        assert [r.name for r in reports] == ["score_growth", "tube_score"]
        assert all(r.passed for r in reports)

    @pytest.mark.slow
    def test_parallel_matches_serial(self, ctx):
        names = ["brownian_tail", "q_gradient", "ergodicity"]
        serial = verify_bounds(names, ctx, seed=5, workers=1)
        parallel = verify_bounds(names, ctx, seed=5, workers=2)
        for a, b in zip(serial, parallel):
            assert a.name == b.name
            assert a.measured == b.measured
