"""
Cube Geometry

Folding map, reflection operators and image-lattice enumeration for
reflected Brownian motion on [0, 1]^D.

The folding map is the 2-periodic tent map applied per coordinate. An
unconstrained Brownian path pushed through it is a reflected Brownian
motion, and the image R_z(x) + z of a cube point folds back onto x for
every integer vector z.
"""

import itertools
import logging
from typing import Union

import numpy as np

from ..config import KERNEL_CONFIG
from ..utils.errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray, list]


def _require_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{what} must be finite, got {x!r}")


def fold_scalar(x: float) -> float:
    """
    2-periodic tent map.

    f(x) = x - 2k on [2k, 2k+1) and 2k - x on [2k-1, 2k); odd integers map
    to 1 (left limit).

    Raises:
        DomainError: If x is not finite

    Example:
        >>> fold_scalar(1.5)
        0.5
    """
    value = float(x)
    if not np.isfinite(value):
        raise DomainError(f"fold_scalar needs a finite input, got {value}")
    return float(fold(value))


def fold(x: ArrayLike) -> np.ndarray:
    """
    Componentwise folding map R^D -> [0, 1]^D.

    Works on any array shape. The map is 1-Lipschitz and the identity on
    the cube.

    Raises:
        DomainError: If any entry is not finite
    """
    arr = np.asarray(x, dtype=float)
    _require_finite(arr, "fold input")
    r = np.mod(arr, 2.0)
    # np.mod can round tiny negatives up to exactly 2.0; 2 - 2 = 0 is still correct
    return np.where(r <= 1.0, r, 2.0 - r)


def reflect_image(z: ArrayLike, x: ArrayLike) -> np.ndarray:
    """
    Image point R_z(x) + z.

    Coordinate i is x_i + z_i when z_i is even and (1 - x_i) + z_i when it
    is odd. Broadcasts over leading axes of z and x.

    Args:
        z: Integer image index (..., D)
        x: Cube point (..., D)

    Returns:
        Ambient point with fold(result) == x
    """
    z = np.asarray(z)
    x = np.asarray(x, dtype=float)
    odd = (z % 2) != 0
    return np.where(odd, 1.0 - x, x) + z


def reflection_sign(z: ArrayLike) -> np.ndarray:
    """(-1)^z per coordinate: derivative of R_z(x) + z with respect to x."""
    z = np.asarray(z)
    return np.where((z % 2) != 0, -1.0, 1.0)


def lattice_size(K_cut: int, D: int) -> int:
    """Number of indices with ||z||_inf <= K_cut in D dimensions."""
    return (2 * int(K_cut) + 1) ** int(D)


def image_lattice(K_cut: int, D: int, max_size: int = KERNEL_CONFIG["max_lattice_size"]) -> np.ndarray:
    """
    Enumerate all z in Z^D with ||z||_inf <= K_cut.

    Order is lexicographic in (z_1, ..., z_D), which is deterministic.

    Args:
        K_cut: Lattice radius (>= 0)
        D: Ambient dimension (>= 1)
        max_size: Refuse enumerations larger than this

    Returns:
        Integer array of shape ((2K_cut+1)^D, D)

    Raises:
        ConfigurationError: Negative radius or too many indices; large
            lattices should go through the per-coordinate factorization
    """
    if K_cut < 0 or D < 1:
        raise ConfigurationError(f"image_lattice needs K_cut >= 0 and D >= 1, got K_cut={K_cut}, D={D}")
    count = lattice_size(K_cut, D)
    if count > max_size:
        raise ConfigurationError(
            f"image lattice of radius {K_cut} in D={D} has {count} indices (limit {max_size}); "
            "use the factorized kernel instead"
        )
    axis = range(-int(K_cut), int(K_cut) + 1)
    return np.array(list(itertools.product(axis, repeat=int(D))), dtype=np.int64).reshape(count, int(D))


def distance_to_boundary(x: ArrayLike) -> np.ndarray:
    """dist(x, boundary of [0,1]^D) for points (..., D)."""
    x = np.asarray(x, dtype=float)
    return np.min(np.minimum(x, 1.0 - x), axis=-1)


def inward_normal(x: ArrayLike, atol: float = 0.0) -> np.ndarray:
    """
    Inward normal n(x) = sum_{x_i = 0} e_i - sum_{x_j = 1} e_j.

    Zero in the interior; at edges and corners the face normals add up.

    Args:
        x: Cube points (..., D)
        atol: Distance to a face still counted as on the face
    """
    x = np.asarray(x, dtype=float)
    on_low = x <= atol
    on_high = x >= 1.0 - atol
    return on_low.astype(float) - on_high.astype(float)


def in_cube(x: ArrayLike) -> bool:
    """True when every coordinate lies in [0, 1]."""
    x = np.asarray(x, dtype=float)
    return bool(np.all((x >= 0.0) & (x <= 1.0)))
