"""
Distances between sample sets and to the stationary law.

One-dimensional W1 by quantile coupling, sliced W1 over random unit
directions, an exact transport LP for small clouds, the total-variation
distance of q_t(x0, .) to the uniform density, and tube-membership
helpers for fattened supports.
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import simpson
from scipy.optimize import linprog
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from ..config import SAMPLE_CONFIG
from ..diffusion.kernel import DEFAULT_KERNEL, KernelConfig, log_q
from ..diffusion.quadrature import simpson_nodes
from ..diffusion.targets import EmpiricalTarget, SubspaceTarget, TargetMeasure
from ..utils.errors import ConfigurationError, DomainError, NumericalError, UnsupportedError

logger = logging.getLogger(__name__)

TV_NODES_1D = 4097
LP_MAX_POINTS = 256


def _as_samples(a, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise DomainError(f"{what} is empty")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{what} contains non-finite values")
    return a


def w1_1d(a, b) -> float:
    """
    Exact Wasserstein-1 between two empirical measures on the line.

    Equal sizes use the sorted coupling mean |a_(i) - b_(i)|; otherwise
    the quantile functions are integrated piecewise.

    Example:
        >>> w1_1d([0.0, 1.0], [0.5, 0.5])
        0.5
    """
    a = _as_samples(a, "first sample").ravel()
    b = _as_samples(b, "second sample").ravel()
    if a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    return float(wasserstein_distance(a, b))


def random_directions(n_proj: int, D: int, rng: np.random.Generator) -> np.ndarray:
    """n_proj uniformly distributed unit vectors in R^D, shape (n_proj, D)."""
    if n_proj < 1:
        raise ConfigurationError(f"n_proj must be >= 1, got {n_proj}")
    theta = rng.standard_normal((n_proj, D))
    return theta / np.linalg.norm(theta, axis=1, keepdims=True)


def sliced_w1(a, b, n_proj: int = SAMPLE_CONFIG["n_projections"], rng: Optional[np.random.Generator] = None) -> float:
    """
    Mean of w1_1d over n_proj random projections.

    In D = 1 every direction is +-1, so the value is the exact 1-D W1.
    """
    a = np.atleast_2d(_as_samples(a, "first sample"))
    b = np.atleast_2d(_as_samples(b, "second sample"))
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    rng = rng if rng is not None else np.random.default_rng(0)
    theta = random_directions(n_proj, a.shape[1], rng)
    pa = a @ theta.T
    pb = b @ theta.T
    if a.shape[0] == b.shape[0]:
        return float(np.mean(np.abs(np.sort(pa, axis=0) - np.sort(pb, axis=0))))
    return float(np.mean([wasserstein_distance(pa[:, k], pb[:, k]) for k in range(n_proj)]))


def exact_w1_lp(a, b) -> float:
    """
    Euclidean W1 between two small clouds by linear programming.

    Raises:
        ConfigurationError: more than 256 points in either cloud
        NumericalError: the solver failed
    """
    a = np.atleast_2d(_as_samples(a, "first sample"))
    b = np.atleast_2d(_as_samples(b, "second sample"))
    n, m = a.shape[0], b.shape[0]
    if max(n, m) > LP_MAX_POINTS:
        raise ConfigurationError(f"exact LP W1 is limited to {LP_MAX_POINTS} points, got {n} and {m}")
    cost = cdist(a, b).ravel()
    rows = sparse.kron(sparse.identity(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.identity(m))
    A_eq = sparse.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    result = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not result.success:
        raise NumericalError(f"transport LP failed: {result.message}")
    return float(result.fun)


def tv_to_uniform(
    x0: Sequence[float],
    t: float,
    n_nodes: int = TV_NODES_1D,
    n_nodes_2d: int = SAMPLE_CONFIG["tv_nodes_2d"],
    cfg: KernelConfig = DEFAULT_KERNEL,
) -> float:
    """
    Total variation 1/2 int |q_t(x0, y) - 1| dy by composite Simpson.

    Raises:
        UnsupportedError: D > 2
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    D = x0.shape[0]
    if D == 1:
        y = simpson_nodes(n_nodes)
        q = np.exp(log_q(x0[None, :], y[:, None], t, cfg))
        value = 0.5 * simpson(np.abs(q - 1.0), x=y)
    elif D == 2:
        y = simpson_nodes(n_nodes_2d)
        grid = np.stack(np.meshgrid(y, y, indexing="ij"), axis=-1)
        q = np.exp(log_q(x0, grid, t, cfg))
        value = 0.5 * simpson(simpson(np.abs(q - 1.0), x=y, axis=1), x=y)
    else:
        raise UnsupportedError(f"tensor quadrature for TV is limited to D <= 2, got D={D}")
    return float(min(max(value, 0.0), 1.0))


# ============================================================================
# Tubes around supports
# ============================================================================

def tube_radius(t: float, D: int, rho: float) -> float:
    """sqrt(t (D + 2 rho)): radius of the fattened support."""
    if t < 0 or rho < 0:
        raise DomainError(f"tube radius needs t, rho >= 0, got {t}, {rho}")
    return math.sqrt(t * (D + 2.0 * rho))


def distance_to_support(x: np.ndarray, target: TargetMeasure) -> np.ndarray:
    """Euclidean distance from each row of x to the target's support."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if isinstance(target, EmpiricalTarget):
        return cdist(x, target.points).min(axis=1)
    if isinstance(target, SubspaceTarget):
        u = target.frame.pull_back(x) - target.center
        in_plane = np.maximum(np.linalg.norm(u, axis=1) - target.radius, 0.0)
        normal = np.linalg.norm(target.frame.normal_part(x), axis=1)
        return np.hypot(in_plane, normal)
    raise ConfigurationError(f"unknown target type {type(target).__name__}")


def in_tube(x: np.ndarray, target: TargetMeasure, t: float, rho: float) -> np.ndarray:
    """Membership of x in the sqrt(t (D + 2 rho))-fattening of the support."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return distance_to_support(x, target) <= tube_radius(t, x.shape[1], rho)
