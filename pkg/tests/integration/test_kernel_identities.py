"""
Integration tests: analytic identities of the reflected heat kernel checked
by quadrature, and agreement between the three score evaluators.
"""

import numpy as np
import pytest
from scipy.integrate import simpson

from src.diffusion.forward_sim import sample_marginal
from src.diffusion.kernel import ExactScore, grad_log_q, log_q, q1d, score_empirical_batch, score_subspace_batch
from src.diffusion.quadrature import simpson_nodes
from src.diffusion.targets import SubspaceFrame, make_empirical_target, make_subspace_target, sample_target


@pytest.mark.integration
class TestKernelNormalization:
    """Each q_t(y, .) is a probability density on [0, 1]."""

    @pytest.mark.parametrize("t", [1e-4, 1e-2, 1.0, 10.0])
    @pytest.mark.parametrize("y", [0.0, 0.37, 1.0])
    def test_integrates_to_one(self, t, y):
        x = simpson_nodes(4097)
        density = np.exp(log_q(np.array([[y]]), x[:, None], t))
        assert simpson(density, x=x) == pytest.approx(1.0, abs=1e-8)

    def test_two_dimensional_mass(self):
        x = simpson_nodes(513)
        grid = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)
        density = np.exp(log_q(np.array([0.2, 0.9]), grid, 0.01))
        assert simpson(simpson(density, x=x, axis=1), x=x) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.integration
class TestChapmanKolmogorov:
    """Semigroup property: int q_s(y, z) q_t(z, x) dz = q_{s+t}(y, x)."""

    @pytest.mark.parametrize("s,t", [(0.01, 0.02), (0.05, 0.3), (0.5, 1.0)])
    def test_one_dimensional(self, s, t, rng):
        z = simpson_nodes(2049)
        K = 12
        for y, x in rng.uniform(size=(5, 2)):
            lhs = simpson(np.exp(q1d(y, z, s, K) + q1d(z, x, t, K)), x=z)
            rhs = float(np.exp(q1d(y, x, s + t, K)))
            assert lhs == pytest.approx(rhs, rel=1e-6)


@pytest.mark.integration
class TestScoreEvaluatorsAgree:
    """Oracle, empirical and window quadratures describe the same marginal."""

    def test_flat_segment_against_dense_grid(self):
        """A uniform segment matches the empirical score of a fine midpoint grid."""
        target = make_subspace_target(
            1, 1, alpha=1, c0=1, bump_strength=0.0,
            frame=SubspaceFrame(np.eye(1), [0.5]), radius=0.25,
        )
        n = 4000
        grid = make_empirical_target((0.25 + 0.5 * (np.arange(n) + 0.5) / n)[:, None])
        x = np.linspace(0.05, 0.95, 31)[:, None]
        t = 0.01
        oracle, log_oracle, _ = score_subspace_batch(target, x, t)
        approx, log_approx, _ = score_empirical_batch(grid, x, t)
        np.testing.assert_allclose(oracle, approx, rtol=1e-3, atol=1e-3)
        np.testing.assert_allclose(log_oracle, log_approx, atol=1e-4)

    def test_window_and_global_rules_agree(self, segment_target):
        """Both quadrature branches give the same score near the switch time."""
        rng = np.random.default_rng(4)
        x = sample_marginal(segment_target, 0.01, 10, rng)
        r = segment_target.radius
        t_switch = (2.0 * r / 8.0) ** 2
        window, _, _ = score_subspace_batch(segment_target, x, 0.999 * t_switch)
        whole, _, _ = score_subspace_batch(segment_target, x, 1.001 * t_switch)
        np.testing.assert_allclose(window, whole, rtol=2e-2, atol=2e-2)

    def test_exact_score_matches_log_density_gradient(self, segment_target):
        """Finite differences of the oracle log-density reproduce the score."""
        rng = np.random.default_rng(6)
        x = np.clip(sample_marginal(segment_target, 0.05, 10, rng), 0.05, 0.95)
        oracle = ExactScore(segment_target)
        t, h = 0.05, 1e-5
        scores, _ = oracle.evaluate(x, t)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            _, lp_plus = oracle.evaluate(x + e, t)
            _, lp_minus = oracle.evaluate(x - e, t)
            np.testing.assert_allclose(scores[:, i], (lp_plus - lp_minus) / (2 * h), atol=1e-4)


def self_normalized_se(cloud: np.ndarray, x: np.ndarray, t: float) -> np.ndarray:
    """
    Delta-method standard error of the empirical score at x, per coordinate.

    The empirical score is sum_j q_j g_j / sum_j q_j with q_j = q_t(y_j, x)
    and g_j = grad log q_t(y_j, x); its variance is
    sum_j q_j^2 (g_j - s)^2 / (sum_j q_j)^2.
    """
    log_w = log_q(cloud, x, t)
    w = np.exp(log_w - log_w.max())
    g = grad_log_q(cloud, x, t)
    s = w @ g / w.sum()
    return np.sqrt((w ** 2) @ (g - s) ** 2) / w.sum()


@pytest.mark.integration
@pytest.mark.slow
class TestOracleAgainstLargeClouds:
    """The quadrature oracle matches 10^5-atom empirical scores within 3 sigma."""

    N_ATOMS = 100_000
    N_CLOUDS = 4

    def evaluation_points(self, target):
        A = target.frame.A[:, 0]
        normal = np.array([-A[1], A[0]])
        r = target.radius
        along = np.array([-0.5, 0.1, 0.6]) * r
        across = np.array([0.04, -0.02, 0.08])
        u = target.center[None, :] + along[:, None]
        return np.clip(target.frame.to_ambient(u) + across[:, None] * normal, 0.0, 1.0)

    @pytest.mark.parametrize("t", [0.01, 0.05, 0.2])
    def test_mean_error_within_three_standard_errors(self, segment_target, t):
        x = self.evaluation_points(segment_target)
        oracle = ExactScore(segment_target)(x, t)
        errors, variances = [], []
        for r in range(self.N_CLOUDS):
            atoms = sample_target(segment_target, self.N_ATOMS, np.random.default_rng(100 + r))
            approx, _, _ = score_empirical_batch(make_empirical_target(atoms), x, t)
            errors.append(approx - oracle)
            variances.append(np.stack([self_normalized_se(atoms, p, t) for p in x]) ** 2)

        mean_error = np.mean(errors, axis=0)
        se = np.sqrt(np.sum(variances, axis=0)) / self.N_CLOUDS
        assert np.all(se > 0)
        assert np.all(np.abs(mean_error) <= 3.0 * se), f"z-scores {mean_error / se}"

    def test_standard_error_matches_replicate_spread(self, segment_target):
        """The delta-method error bar describes the spread across clouds."""
        t = 0.05
        x = self.evaluation_points(segment_target)[:1]
        values, se = [], []
        for r in range(12):
            atoms = sample_target(segment_target, 20_000, np.random.default_rng(200 + r))
            approx, _, _ = score_empirical_batch(make_empirical_target(atoms), x, t)
            values.append(approx[0])
            se.append(self_normalized_se(atoms, x[0], t))
        ratio = np.std(values, axis=0, ddof=1) / np.mean(se, axis=0)
        assert np.all((ratio > 0.4) & (ratio < 2.0))
