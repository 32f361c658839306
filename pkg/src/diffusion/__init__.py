"""Reflected Brownian motion on the unit cube: geometry, targets, simulation and kernel."""

from .cube_geometry import fold, reflect_image
from .forward_sim import sample_marginal, simulate_forward
from .kernel import ExactScore, KernelConfig, grad_log_q, log_q, score_empirical, score_subspace_oracle
from .targets import EmpiricalTarget, SubspaceTarget, make_empirical_target, make_subspace_target, sample_target

__all__ = [
    'fold', 'reflect_image',
    'sample_marginal', 'simulate_forward',
    'ExactScore', 'KernelConfig', 'grad_log_q', 'log_q', 'score_empirical', 'score_subspace_oracle',
    'EmpiricalTarget', 'SubspaceTarget', 'make_empirical_target', 'make_subspace_target', 'sample_target',
]
