"""
Forward Reflected Brownian Motion

Exact simulation at requested times through the folding construction
X_t = fold(Y + B_t), plus a Riemann-sum occupation estimate of the
boundary local time.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from ..config import SIMULATE_CONFIG
from ..utils.errors import DomainError
from ..utils.rng_utils import stream
from .cube_geometry import fold, in_cube
from .targets import TargetMeasure, sample_target

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PathSample:
    """
    One reflected path observed at increasing times.

    Attributes:
        times: (n_times,) strictly increasing, times[0] >= 0
        positions: (n_times, D) cube points
        driver: (n_times, D) unfolded path Y + B_t, or None
    """

    times: np.ndarray
    positions: np.ndarray
    driver: Optional[np.ndarray] = None

    @property
    def D(self) -> int:
        return self.positions.shape[1]


def _validate_times(times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0) or not np.all(np.isfinite(times)):
        raise DomainError("times must be finite, start at >= 0 and be strictly increasing")
    return times


def _brownian_driver(y0: np.ndarray, times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Unfolded paths y0 + B_t; y0 is (n, D), result (n, n_times, D)."""
    steps = np.diff(np.concatenate([[0.0], times]))
    increments = rng.standard_normal((y0.shape[0], times.shape[0], y0.shape[1])) * np.sqrt(steps)[None, :, None]
    return y0[:, None, :] + np.cumsum(increments, axis=1)


def simulate_forward(y0, times: Sequence[float], rng: np.random.Generator, keep_driver: bool = True) -> PathSample:
    """
    Simulate one reflected Brownian path started at y0.

    Increments N(0, dt I) accumulate onto y0 and the running sum is folded
    at each requested time, so marginals are exact (no time-step error).

    Args:
        y0: Start point in the cube (D,)
        times: Increasing observation times (times[0] may be 0)
        rng: Caller-owned generator
        keep_driver: Keep the unfolded path

    Raises:
        DomainError: y0 outside the cube or invalid times
    """
    y0 = np.asarray(y0, dtype=float).reshape(1, -1)
    if not in_cube(y0):
        raise DomainError(f"start point {y0.ravel()} is outside the cube")
    times = _validate_times(times)
    driver = _brownian_driver(y0, times, rng)[0]
    return PathSample(times=times, positions=fold(driver), driver=driver if keep_driver else None)


def simulate_paths(y0: np.ndarray, times: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Positions (n, n_times, D) of n independent paths from starts y0 (n, D)."""
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    return fold(_brownian_driver(y0, _validate_times(times), rng))


def simulate_paths_parallel(
    y0: np.ndarray,
    times: Sequence[float],
    seed: int,
    workers: int = 1,
    batch_size: int = SIMULATE_CONFIG["batch_size"],
) -> np.ndarray:
    """
    simulate_paths split into fixed batches with one stream per batch.

    Batch boundaries and streams do not depend on the worker count, so
    the result is identical for any number of workers.
    """
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    starts = list(range(0, y0.shape[0], batch_size))
    results = Parallel(n_jobs=workers)(
        delayed(simulate_paths)(y0[s:s + batch_size], times, stream(seed, "paths", k))
        for k, s in enumerate(starts)
    )
    return np.concatenate(results, axis=0)


def sample_marginal(target: TargetMeasure, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw X_t with X_0 ~ target: fold(X_0 + sqrt(t) Z).

    At t = 0 the target samples are returned unchanged.
    """
    if t < 0:
        raise DomainError(f"sample_marginal needs t >= 0, got {t}")
    x0 = sample_target(target, n, rng)
    if t == 0:
        return x0
    return fold(x0 + np.sqrt(t) * rng.standard_normal(x0.shape))


def occupation_local_time(path: PathSample, eps: float, per_coordinate: bool = False):
    """
    Riemann approximation of the boundary local time L_t.

    (1 / 2 eps) * sum_k dt_k * #{coordinates of X_{t_k} within eps of {0, 1}},
    left endpoint rule over the path's time grid.

    Args:
        path: Path on a fine grid (dt << eps^2)
        eps: Boundary layer width
        per_coordinate: Return the vector (L^1, ..., L^D) instead of the total

    Raises:
        DomainError: eps <= 0
    """
    if not eps > 0:
        raise DomainError(f"local time width must be positive, got {eps}")
    dt = np.diff(path.times)
    near = (path.positions[:-1] <= eps) | (path.positions[:-1] >= 1.0 - eps)
    per_coord = (dt[:, None] * near).sum(axis=0) / (2.0 * eps)
    if per_coordinate:
        return per_coord
    return float(per_coord.sum())
