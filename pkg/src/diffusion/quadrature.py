"""
Quadrature Helpers

Gauss-Legendre panels (batched over many intervals at once) and radial
Gauss-Jacobi rules for ball-supported densities.
"""

from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import gammaln, roots_jacobi, roots_legendre


@lru_cache(maxsize=32)
def legendre_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = roots_legendre(int(n))
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=32)
def jacobi_rule(n: int, alpha: float, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi nodes and weights for (1-x)^alpha (1+x)^beta on [-1, 1]."""
    nodes, weights = roots_jacobi(int(n), float(alpha), float(beta))
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def panel_rule(a: np.ndarray, b: np.ndarray, n_panels: int, n_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite Gauss-Legendre rule on a batch of intervals [a, b].

    Each interval is cut into n_panels equal panels of n_nodes nodes.
    Degenerate intervals (a == b) get zero weights.

    Args:
        a, b: Interval endpoints of identical shape S
        n_panels: Panels per interval
        n_nodes: Nodes per panel

    Returns:
        (nodes, weights), each of shape S + (n_panels * n_nodes,)
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x, w = legendre_rule(n_nodes)
    width = (b - a) / n_panels
    starts = a[..., None] + width[..., None] * np.arange(n_panels)
    half = 0.5 * width[..., None, None]
    nodes = starts[..., None] + half * (x + 1.0)
    weights = np.broadcast_to(half * w, nodes.shape)
    shape = a.shape + (n_panels * n_nodes,)
    return nodes.reshape(shape), np.array(weights).reshape(shape)


def unit_sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} (2 for d = 1, 2*pi for d = 2)."""
    return float(np.exp(np.log(2.0) + 0.5 * d * np.log(np.pi) - gammaln(0.5 * d)))


def simpson_nodes(n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Equispaced nodes for composite Simpson (n must be odd)."""
    if n % 2 == 0:
        raise ValueError(f"Simpson needs an odd node count, got {n}")
    return np.linspace(lo, hi, n)
