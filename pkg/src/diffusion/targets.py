"""
Target Measures

Two families of data distributions on the cube:

- EmpiricalTarget: weighted point cloud (also used for training data).
- SubspaceTarget: smooth density on a d-ball inside an affine d-plane
  A u + v0, with q(u) proportional to dist(u, boundary)^(c0 - d) times a
  Gaussian bump exp(-beta |u - c|^2 / r^2).

Targets are immutable; sampling always takes a caller-owned Generator.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from ..config import QUADRATURE_CONFIG, TARGET_CONFIG
from ..utils.errors import ConfigurationError, DomainError, TargetConstructionError
from ..utils.rng_utils import stream
from .cube_geometry import distance_to_boundary
from .quadrature import jacobi_rule, panel_rule, unit_sphere_area

logger = logging.getLogger(__name__)

MIN_ACCEPTANCE_RATE = 1e-4
ORTHONORMAL_TOL = 1e-12


# ============================================================================
# Frame and parameters
# ============================================================================

@dataclass(frozen=True, eq=False)
class SubspaceFrame:
    """Orthonormal frame A (D x d) and shift v0 of the affine support plane."""

    A: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        v0 = np.asarray(self.v0, dtype=float).reshape(-1)
        if A.shape[0] != v0.shape[0]:
            raise ConfigurationError(f"frame A has {A.shape[0]} rows but v0 has length {v0.shape[0]}")
        gram_error = np.max(np.abs(A.T @ A - np.eye(A.shape[1])))
        if gram_error > ORTHONORMAL_TOL:
            raise ConfigurationError(f"frame columns are not orthonormal (max |A^T A - I| = {gram_error:.3e})")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "v0", v0)

    @property
    def D(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def to_ambient(self, u: np.ndarray) -> np.ndarray:
        """u (..., d) -> A u + v0 (..., D)."""
        return np.asarray(u, dtype=float) @ self.A.T + self.v0

    def pull_back(self, x: np.ndarray) -> np.ndarray:
        """x (..., D) -> A^T (x - v0) (..., d)."""
        return (np.asarray(x, dtype=float) - self.v0) @ self.A

    def normal_part(self, x: np.ndarray) -> np.ndarray:
        """x (..., D) -> (I - A A^T)(x - v0)."""
        w = np.asarray(x, dtype=float) - self.v0
        return w - (w @ self.A) @ self.A.T


@dataclass(frozen=True)
class DensityParams:
    """Shape parameters and derived constants of a subspace density."""

    alpha: int
    c0: float
    bump_strength: float
    rho_min: float
    eps_M: float
    log_norm: float
    p_min: float
    p_max: float
    kappa: float


# ============================================================================
# Target variants
# ============================================================================

@dataclass(frozen=True, eq=False)
class EmpiricalTarget:
    """Weighted point cloud inside the cube."""

    points: np.ndarray
    weights: np.ndarray
    rho_min: Optional[float] = None
    kind: str = field(default="empirical", init=False)

    @property
    def D(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)


@dataclass(frozen=True, eq=False)
class SubspaceTarget:
    """Density on the ball |u - center| <= radius of the plane A u + v0."""

    frame: SubspaceFrame
    center: np.ndarray
    radius: float
    params: DensityParams
    seed: Optional[int] = None
    kind: str = field(default="subspace", init=False)

    @property
    def D(self) -> int:
        return self.frame.D

    @property
    def d(self) -> int:
        return self.frame.d

    @property
    def exponent(self) -> float:
        """c0 - d, the boundary decay exponent."""
        return self.params.c0 - self.d

    def log_unnormalized(self, u: np.ndarray) -> np.ndarray:
        """log of dist(u, boundary)^(c0-d) * bump; -inf outside the ball."""
        u = np.asarray(u, dtype=float)
        rho = np.linalg.norm(u - self.center, axis=-1)
        dist = self.radius - rho
        inside = dist >= 0.0
        a = self.exponent
        with np.errstate(divide="ignore", invalid="ignore"):
            boundary = a * np.log(np.where(inside, dist, 1.0)) if a != 0 else np.zeros_like(dist)
        bump = -self.params.bump_strength * rho ** 2 / self.radius ** 2
        return np.where(inside, boundary + bump, -np.inf)

    def log_density_u(self, u: np.ndarray) -> np.ndarray:
        """Normalized log-density in plane coordinates."""
        return self.log_unnormalized(u) - self.params.log_norm

    def acceptance_rate(self) -> float:
        """Mean acceptance of uniform-ball proposals against the r^(c0-d) envelope."""
        log_volume = np.log(unit_sphere_area(self.d) / self.d) + self.d * np.log(self.radius)
        return float(np.exp(self.params.log_norm - log_volume - self.exponent * np.log(self.radius)))


TargetMeasure = Union[EmpiricalTarget, SubspaceTarget]


# ============================================================================
# Construction
# ============================================================================

def make_empirical_target(
    points: Sequence,
    weights: Optional[Sequence[float]] = None,
    rho_min: Optional[float] = None,
) -> EmpiricalTarget:
    """
    Build a weighted point cloud.

    Args:
        points: (n, D) cube points
        weights: Probability vector (uniform if None)
        rho_min: If given, every point must be at least this far from the boundary

    Raises:
        DomainError: Points outside the cube or not finite
        ConfigurationError: Bad weights
        TargetConstructionError: A point violates the boundary margin
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise DomainError("empirical target needs at least one point")
    if not np.all(np.isfinite(pts)) or np.any(pts < 0.0) or np.any(pts > 1.0):
        raise DomainError("empirical target points must be finite and inside [0,1]^D")

    if weights is None:
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0] or np.any(w < 0) or not np.isfinite(w).all():
            raise ConfigurationError("weights must be a non-negative vector with one entry per point")
        total = w.sum()
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError(f"weights must sum to 1, got {total}")
        w = w / total

    if rho_min is not None:
        margin = float(np.min(distance_to_boundary(pts)))
        if margin < rho_min:
            raise TargetConstructionError(
                f"point cloud comes within {margin:.4g} of the cube boundary (rho_min={rho_min})"
            )
    return EmpiricalTarget(points=pts, weights=w, rho_min=rho_min)


def make_point_mass(y0: Sequence[float]) -> EmpiricalTarget:
    """Dirac mass at y0."""
    return make_empirical_target([list(np.atleast_1d(y0))])


def make_two_atom_target(a: float = 0.3, b: float = 0.7, D: int = 1) -> EmpiricalTarget:
    """Equal-weight atoms at a*1 and b*1: the default hard target."""
    return make_empirical_target([[a] * D, [b] * D])


def random_frame(D: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal D x d frame from the QR factorization of a Gaussian matrix."""
    Q, R = np.linalg.qr(rng.standard_normal((D, d)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def _log_normalizer(d: int, exponent: float, bump: float, radius: float, n_nodes: int) -> float:
    """
    log of the integral of (r - |u|)^a exp(-beta |u|^2 / r^2) over the d-ball.

    With rho = r (1 + xi) / 2 the radial integral becomes a Gauss-Jacobi
    integral with weight (1 - xi)^a (1 + xi)^(d-1).
    """
    xi, w = jacobi_rule(n_nodes, exponent, d - 1)
    radial = np.sum(w * np.exp(-bump * (1.0 + xi) ** 2 / 4.0))
    return float(
        np.log(unit_sphere_area(d)) + (exponent + d) * np.log(0.5 * radius) + np.log(radial)
    )


def make_subspace_target(
    D: int,
    d: int,
    alpha: int,
    c0: Optional[float] = None,
    seed: int = 0,
    bump_strength: float = TARGET_CONFIG["bump_strength"],
    rho_min: float = TARGET_CONFIG["rho_min"],
    radius: Optional[float] = None,
    radius_scale: float = TARGET_CONFIG["radius_scale"],
    frame: Optional[SubspaceFrame] = None,
    center: Optional[Sequence[float]] = None,
    eps_M: Optional[float] = None,
    jacobi_nodes: int = QUADRATURE_CONFIG["jacobi_nodes"],
) -> SubspaceTarget:
    """
    Build a smooth density supported on a d-ball of an affine d-plane.

    The frame is random (seeded) unless given; by default the plane passes
    through the cube centre and the ball is as large as the margin rho_min
    allows, times radius_scale.

    Args:
        D: Ambient dimension
        d: Intrinsic dimension (1 <= d <= D)
        alpha: Integer smoothness, alpha > d/2
        c0: Boundary-mass exponent (defaults to alpha + d; must be >= d)
        seed: Seed for the random frame
        bump_strength: beta of the Gaussian bump (0 gives a flat bump)
        rho_min: Required distance from the support to the cube boundary
        radius: Ball radius (derived from the margin if None)
        radius_scale: Fraction of the largest feasible radius when derived
        frame: Fixed frame instead of a random one
        center: Ball centre in plane coordinates (origin if None)
        eps_M: Boundary-layer width (radius / 4 if None)
        jacobi_nodes: Radial nodes for the normalizing constant

    Returns:
        SubspaceTarget with its normalizing constant stored

    Raises:
        ConfigurationError: Invalid dimensions or exponents
        TargetConstructionError: The ball cannot fit at margin rho_min

    Example:
        >>> flat = make_subspace_target(1, 1, alpha=1, c0=1, bump_strength=0.0,
        ...     frame=SubspaceFrame(np.eye(1), [0.5]), radius=0.25)
    """
    if not 1 <= d <= D:
        raise ConfigurationError(f"need 1 <= d <= D, got d={d}, D={D}")
    if int(alpha) != alpha or alpha <= d / 2:
        raise ConfigurationError(f"alpha must be an integer > d/2, got {alpha}")
    c0 = float(alpha + d) if c0 is None else float(c0)
    if c0 < d:
        raise ConfigurationError(f"c0 must be >= d, got c0={c0}, d={d}")
    if c0 < alpha + d:
        logger.warning(f"c0={c0} is below alpha + d = {alpha + d}; boundary smoothness is not guaranteed")

    if frame is None:
        frame = SubspaceFrame(random_frame(D, d, stream(seed, "target")), np.full(D, 0.5))
    elif frame.D != D or frame.d != d:
        raise ConfigurationError(f"frame has shape {frame.A.shape}, expected ({D}, {d})")
    center_u = np.zeros(d) if center is None else np.asarray(center, dtype=float).reshape(d)

    base = frame.to_ambient(center_u)
    row_norms = np.linalg.norm(frame.A, axis=1)
    room = np.minimum(base - rho_min, 1.0 - rho_min - base)
    if np.any(room <= 0):
        raise TargetConstructionError(f"support centre {base} is within rho_min={rho_min} of the boundary")
    if radius is None:
        with np.errstate(divide="ignore"):
            radius = float(radius_scale * np.min(np.where(row_norms > 0, room / row_norms, np.inf)))
    if not np.isfinite(radius) or radius <= 0:
        raise TargetConstructionError(f"support radius must be positive and finite, got {radius}")

    if np.any(row_norms * radius > room + 1e-12):
        raise TargetConstructionError(
            f"ball of radius {radius:.4g} leaves [rho_min, 1 - rho_min]^D (rho_min={rho_min})"
        )

    exponent = c0 - d
    eps_M = radius / 4.0 if eps_M is None else float(eps_M)
    log_norm = _log_normalizer(d, exponent, bump_strength, radius, jacobi_nodes)
    p_max = float(np.exp(exponent * np.log(radius) - log_norm))
    p_min = float(np.exp(
        exponent * np.log(eps_M) - bump_strength * (radius - eps_M) ** 2 / radius ** 2 - log_norm
    ))
    kappa = d * (c0 - d) / 2 + d + 3 * alpha + 2

    params = DensityParams(
        alpha=int(alpha), c0=c0, bump_strength=float(bump_strength), rho_min=float(rho_min),
        eps_M=eps_M, log_norm=log_norm, p_min=p_min, p_max=p_max, kappa=float(kappa),
    )
    logger.info(
        f"✓ Subspace target D={D} d={d} radius={radius:.4f} c0={c0} "
        f"(p_max={p_max:.4g}, kappa={kappa:g})"
    )
    return SubspaceTarget(frame=frame, center=center_u, radius=float(radius), params=params, seed=seed)


# ============================================================================
# Quadrature checks
# ============================================================================

def density_mass(target: SubspaceTarget, n_nodes: int = 2 * QUADRATURE_CONFIG["n_nodes"], n_panels: int = 4) -> float:
    """
    Total mass of a subspace density by radial Gauss-Legendre panels.

    Independent of the Gauss-Jacobi rule used for normalization.
    """
    rho, w = panel_rule(np.array(0.0), np.array(target.radius), n_panels, n_nodes)
    u = np.zeros((rho.shape[0], target.d))
    u[:, 0] = rho
    values = np.exp(target.log_density_u(u + target.center))
    return float(unit_sphere_area(target.d) * np.sum(w * rho ** (target.d - 1) * values))


def marginal_cdf_1d(target: SubspaceTarget, s: np.ndarray, n_nodes: int = 64, n_panels: int = 4) -> np.ndarray:
    """
    CDF of the plane coordinate u for a d = 1 target, at offsets s from the centre.

    The integrand has a kink at the centre, so [-r, s] is split there.
    """
    if target.d != 1:
        raise ConfigurationError("marginal_cdf_1d needs a d = 1 target")
    s = np.clip(np.asarray(s, dtype=float), -target.radius, target.radius)
    mid = np.minimum(s, 0.0)
    total = np.zeros_like(s)
    for lo, hi in ((np.full_like(s, -target.radius), mid), (mid, s)):
        nodes, w = panel_rule(lo, hi, n_panels, n_nodes)
        values = np.exp(target.log_density_u(nodes[..., None] + target.center))
        total = total + np.sum(w * values, axis=-1)
    return total


# ============================================================================
# Sampling
# ============================================================================

def _uniform_ball(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    if d == 1:
        return radius * (2.0 * rng.random((n, 1)) - 1.0)
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * (radius * rng.random((n, 1)) ** (1.0 / d))


def sample_plane_coordinates(target: SubspaceTarget, n: int, rng: np.random.Generator,
                             max_batches: int = TARGET_CONFIG["max_rejection_batches"]) -> np.ndarray:
    """Rejection-sample u (n, d) against the r^(c0-d) envelope."""
    rate = target.acceptance_rate()
    if rate < MIN_ACCEPTANCE_RATE:
        raise ConfigurationError(
            f"rejection acceptance rate {rate:.2e} is below {MIN_ACCEPTANCE_RATE:g}; envelope too loose"
        )
    log_envelope = target.exponent * np.log(target.radius)
    batch = int(max(1024, 2 * n / rate))
    accepted = []
    count = 0
    for _ in range(max_batches):
        u = target.center + _uniform_ball(rng, batch, target.d, target.radius)
        keep = np.log(rng.random(batch)) < target.log_unnormalized(u) - log_envelope
        accepted.append(u[keep])
        count += int(keep.sum())
        if count >= n:
            break
    else:
        raise ConfigurationError(f"rejection sampler produced {count}/{n} points in {max_batches} batches")
    return np.concatenate(accepted)[:n]


def sample_target(target: TargetMeasure, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw n i.i.d. points from a target.

    Args:
        target: Empirical or subspace target
        n: Number of draws (>= 1)
        rng: Caller-owned generator

    Returns:
        (n, D) array of cube points

    Raises:
        DomainError: n < 1
        ConfigurationError: Rejection envelope too loose
    """
    if n < 1:
        raise DomainError(f"sample_target needs n >= 1, got {n}")
    if isinstance(target, EmpiricalTarget):
        index = rng.choice(target.n_atoms, size=n, p=target.weights)
        return target.points[index].copy()
    u = sample_plane_coordinates(target, n, rng)
    return target.frame.to_ambient(u)


# ============================================================================
# Margin rescaling for external data
# ============================================================================

@dataclass(frozen=True)
class MarginScaler:
    """
    Isotropic affine map of a data set into [rho_min, 1 - rho_min]^D.

    Isotropic scaling keeps linear structure and angles, so subspace data
    stays subspace data.
    """

    offset: tuple
    scale: float
    rho_min: float

    @classmethod
    def fit(cls, data: np.ndarray, rho_min: float = TARGET_CONFIG["rho_min"]) -> "MarginScaler":
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if not np.all(np.isfinite(data)):
            raise DomainError("data must be finite to fit a margin scaler")
        lo, hi = data.min(axis=0), data.max(axis=0)
        span = float(np.max(hi - lo))
        scale = (1.0 - 2.0 * rho_min) / span if span > 0 else 1.0
        return cls(offset=tuple(0.5 * (lo + hi)), scale=scale, rho_min=float(rho_min))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return 0.5 + (np.asarray(x, dtype=float) - np.asarray(self.offset)) * self.scale

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - 0.5) / self.scale + np.asarray(self.offset)

    def to_dict(self) -> Dict[str, Any]:
        return {"offset": list(self.offset), "scale": self.scale, "rho_min": self.rho_min}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MarginScaler":
        return cls(offset=tuple(data["offset"]), scale=float(data["scale"]), rho_min=float(data["rho_min"]))


# ============================================================================
# Serialization
# ============================================================================

def target_to_dict(target: TargetMeasure) -> Dict[str, Any]:
    """JSON-ready description from which the target can be rebuilt exactly."""
    if isinstance(target, EmpiricalTarget):
        return {
            "kind": "empirical",
            "points": target.points.tolist(),
            "weights": target.weights.tolist(),
            "rho_min": target.rho_min,
        }
    p = target.params
    return {
        "kind": "subspace",
        "A": target.frame.A.tolist(),
        "v0": target.frame.v0.tolist(),
        "center": target.center.tolist(),
        "radius": target.radius,
        "seed": target.seed,
        "alpha": p.alpha,
        "c0": p.c0,
        "bump_strength": p.bump_strength,
        "rho_min": p.rho_min,
        "eps_M": p.eps_M,
    }


def target_from_dict(data: Dict[str, Any]) -> TargetMeasure:
    """Inverse of target_to_dict."""
    kind = data.get("kind")
    if kind == "empirical":
        return make_empirical_target(data["points"], data.get("weights"), data.get("rho_min"))
    if kind == "subspace":
        frame = SubspaceFrame(np.asarray(data["A"], dtype=float), np.asarray(data["v0"], dtype=float))
        return make_subspace_target(
            frame.D, frame.d, alpha=data["alpha"], c0=data["c0"], seed=data.get("seed") or 0,
            bump_strength=data["bump_strength"], rho_min=data["rho_min"], radius=data["radius"],
            frame=frame, center=data["center"], eps_M=data.get("eps_M"),
        )
    raise ConfigurationError(f"unknown target kind {kind!r}")


def save_target(target: TargetMeasure, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(target_to_dict(target), indent=2, sort_keys=True))
    return path


def load_target(path: Union[str, Path]) -> TargetMeasure:
    return target_from_dict(json.loads(Path(path).read_text()))
