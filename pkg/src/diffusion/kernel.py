"""
Reflected Heat Kernel

Image-series evaluation of the transition density of reflected Brownian
motion on [0, 1]^D,

    q_t(y, x) = (2 pi t)^(-D/2) sum_z exp(-|R_z(x) + z - y|^2 / 2t),

its x-gradient, and the marginal scores of empirical and subspace
targets. The l_inf-truncated lattice factorizes over coordinates, so
every D-dimensional evaluation is a sum of 1-D log-sum-exps. All
accumulation happens in the log domain; scores are softmax-weighted
averages of image gradients.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from ..config import KERNEL_CONFIG, QUADRATURE_CONFIG
from ..utils.errors import ConfigurationError, DomainError, UnsupportedError
from .cube_geometry import image_lattice, reflect_image, reflection_sign
from .quadrature import panel_rule
from .targets import EmpiricalTarget, SubspaceTarget, TargetMeasure

logger = logging.getLogger(__name__)

LOG_4E = math.log(4.0) + 1.0


# ============================================================================
# Configuration and result types
# ============================================================================

@dataclass(frozen=True)
class KernelConfig:
    """Truncation and chunking settings for image-series evaluation."""

    tol: float = KERNEL_CONFIG["tol"]
    K_min: int = KERNEL_CONFIG["K_min"]
    K_max: int = KERNEL_CONFIG["K_max"]
    log_domain: bool = KERNEL_CONFIG["log_domain"]
    log_weight_floor: float = KERNEL_CONFIG["log_weight_floor"]
    chunk_budget: int = KERNEL_CONFIG["chunk_budget"]

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ConfigurationError(f"kernel tol must lie in (0, 1), got {self.tol}")
        if not 1 <= self.K_min <= self.K_max:
            raise ConfigurationError(f"need 1 <= K_min <= K_max, got {self.K_min}, {self.K_max}")
        if not self.log_domain:
            raise ConfigurationError("only log-domain kernel evaluation is supported")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "KernelConfig":
        data = dict(data or {})
        data.pop("max_lattice_size", None)
        return cls(**data)


@dataclass(frozen=True)
class QuadratureConfig:
    """Gauss-Legendre settings for the subspace score oracle."""

    n_nodes: int = QUADRATURE_CONFIG["n_nodes"]
    n_nodes_2d: int = QUADRATURE_CONFIG["n_nodes_2d"]
    n_nodes_global: int = QUADRATURE_CONFIG["n_nodes_global"]  # d = 1 once the window covers the support
    panels: int = 2  # per half-window
    window_sigmas: float = QUADRATURE_CONFIG["window_sigmas"]

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "QuadratureConfig":
        data = {k: v for k, v in (data or {}).items() if k in cls.__dataclass_fields__}
        return cls(**data)


@dataclass(frozen=True)
class CutoffChoice:
    """Truncation level K, the lattice radius it implies and the cap flag."""

    level: int
    K_cut: int
    radius: float
    truncated: bool


@dataclass(frozen=True, eq=False)
class ScoreEval:
    """Score value at one point with the log marginal density."""

    value: np.ndarray
    log_density: float
    cutoff_used: int
    truncated: bool = False


DEFAULT_KERNEL = KernelConfig()


# ============================================================================
# Cutoff selection
# ============================================================================

def truncation_level(D: int, tol: float) -> int:
    """Smallest K >= 1 with (4e)^D K^(D/2) e^(-K) < tol."""
    log_tol = math.log(tol)
    K = 1
    while D * LOG_4E + 0.5 * D * math.log(K) - K >= log_tol:
        K += 1
    return K


def truncation_radius(K: int, t: float, D: int) -> int:
    """Lattice radius floor(sqrt(2 t (D + 2K))) that a truncation level K reaches at time t."""
    return int(math.floor(math.sqrt(2.0 * t * (D + 2 * K))))


def cutoff_plan(t: float, D: int, tol: Optional[float] = None, cfg: KernelConfig = DEFAULT_KERNEL) -> CutoffChoice:
    """
    Choose the lattice radius for time t.

    The truncation level K comes from the K^(D/2) e^(-K) tail; images
    closer than sqrt(2 t (D + 2K)) are kept, so K_cut = ceil of that radius
    (at least 1), clamped to [K_min, K_max].

    Raises:
        DomainError: t <= 0 or not finite
    """
    t = float(t)
    if not np.isfinite(t) or t <= 0:
        raise DomainError(f"cutoff needs t > 0, got {t}")
    tol = cfg.tol if tol is None else float(tol)
    if not 0.0 < tol < 1.0:
        raise ConfigurationError(f"tol must lie in (0, 1), got {tol}")
    level = truncation_level(D, tol)
    radius = math.sqrt(2.0 * t * (D + 2 * level))
    wanted = max(1, math.ceil(radius))
    K_cut = min(max(wanted, cfg.K_min), cfg.K_max)
    truncated = wanted > cfg.K_max
    if truncated:
        logger.warning(f"Cutoff capped at K_max={cfg.K_max} (wanted {wanted}) for t={t:g}, D={D}")
    return CutoffChoice(level=level, K_cut=K_cut, radius=radius, truncated=truncated)


def choose_cutoff(t: float, D: int, tol: Optional[float] = None, cfg: KernelConfig = DEFAULT_KERNEL) -> int:
    """Lattice radius K_cut for time t (see cutoff_plan)."""
    return cutoff_plan(t, D, tol, cfg).K_cut


# ============================================================================
# One-dimensional series
# ============================================================================

def _check_time(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise DomainError("kernel evaluation needs finite t > 0")
    return t


def _image_terms_1d(y, x, t, K_cut: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Log-terms, signed displacements and signs over z = -K_cut..K_cut (last axis)."""
    z = np.arange(-K_cut, K_cut + 1)
    x = np.asarray(x, dtype=float)[..., None]
    y = np.asarray(y, dtype=float)[..., None]
    t = np.asarray(t, dtype=float)[..., None]
    diff = reflect_image(z, x) - y
    return -diff * diff / (2.0 * t), diff, reflection_sign(z)


def q1d(y, x, t, K_cut: int) -> np.ndarray:
    """
    log q_t(y, x) in one dimension, truncated to |z| <= K_cut.

    Broadcasts over y, x and t.

    Example:
        >>> float(np.exp(q1d(0.5, 0.5, 0.01, 1)))  # (2 pi 0.01)^(-1/2)
        3.989422804014327
    """
    t = _check_time(t)
    log_terms, _, _ = _image_terms_1d(y, x, t, K_cut)
    return logsumexp(log_terms, axis=-1) - 0.5 * np.log(2.0 * np.pi * t)


def q1d_with_grad(y, x, t, K_cut: int) -> Tuple[np.ndarray, np.ndarray]:
    """log q_t(y, x) and d/dx log q_t(y, x) in one dimension."""
    t = _check_time(t)
    log_terms, diff, sign = _image_terms_1d(y, x, t, K_cut)
    lse = logsumexp(log_terms, axis=-1)
    weights = np.exp(log_terms - lse[..., None])
    grad = -np.sum(weights * diff * sign, axis=-1) / t
    return lse - 0.5 * np.log(2.0 * np.pi * t), grad


# ============================================================================
# D-dimensional kernel
# ============================================================================

def _resolve_cutoff(t, D: int, cfg: KernelConfig, K_cut: Optional[int]) -> int:
    if K_cut is not None:
        return int(K_cut)
    return choose_cutoff(float(np.max(t)), D, cfg=cfg)


def log_q(y, x, t, cfg: KernelConfig = DEFAULT_KERNEL, K_cut: Optional[int] = None) -> np.ndarray:
    """
    log q_t(y, x) for cube points (..., D) as a sum of 1-D series.

    Equals the l_inf-truncated D-dimensional lattice sum exactly.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    t = _check_time(t)
    K = _resolve_cutoff(t, x.shape[-1], cfg, K_cut)
    return np.sum(q1d(y, x, t[..., None], K), axis=-1)


def log_q_lattice(y, x, t: float, K_cut: int) -> np.ndarray:
    """Direct D-dimensional lattice sum (reference for the factorized form)."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    t = float(_check_time(t))
    Z = image_lattice(K_cut, x.shape[-1])
    diff = reflect_image(Z, x[..., None, :]) - y[..., None, :]
    log_terms = -np.sum(diff * diff, axis=-1) / (2.0 * t)
    return logsumexp(log_terms, axis=-1) - 0.5 * x.shape[-1] * np.log(2.0 * np.pi * t)


def grad_log_q(y, x, t, cfg: KernelConfig = DEFAULT_KERNEL, K_cut: Optional[int] = None) -> np.ndarray:
    """
    x-gradient of log q_t(y, x), shape (..., D).

    Per coordinate: -sum_z w_z (R_z(x) + z - y)(-1)^z / t with softmax
    image weights w_z.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    t = _check_time(t)
    K = _resolve_cutoff(t, x.shape[-1], cfg, K_cut)
    _, grad = q1d_with_grad(y, x, t[..., None], K)
    return grad


# ============================================================================
# Mixture scores (empirical targets and quadrature atoms)
# ============================================================================

def mixture_score(
    atoms: np.ndarray,
    log_weights: np.ndarray,
    x: np.ndarray,
    t,
    K_cut: int,
    cfg: KernelConfig = DEFAULT_KERNEL,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Score and log-density of sum_j w_j q_t(y_j, .) at points x.

    Pass one computes log w_j + log q_t(y_j, x) for every pair; pass two
    computes image gradients only for pairs within log_weight_floor of the
    row maximum.

    Args:
        atoms: (n, D) mixture locations
        log_weights: (n,) log mixture weights
        x: (m, D) evaluation points
        t: Scalar time or (m,) times
        K_cut: Lattice radius

    Returns:
        (scores (m, D), log densities (m,))
    """
    atoms = np.asarray(atoms, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, D = x.shape
    n = atoms.shape[0]
    t_rows = np.broadcast_to(_check_time(t), (m,))

    scores = np.zeros((m, D))
    log_p = np.zeros(m)
    per_row = max(1, n * D * (2 * K_cut + 1))
    chunk = max(1, int(cfg.chunk_budget // per_row))

    for start in range(0, m, chunk):
        xc = x[start:start + chunk]
        tc = t_rows[start:start + chunk]
        lq = q1d(atoms[None, :, :], xc[:, None, :], tc[:, None, None], K_cut).sum(axis=-1)
        lw = log_weights[None, :] + lq
        row_max = lw.max(axis=1)
        log_p[start:start + chunk] = logsumexp(lw, axis=1)

        rows, cols = np.nonzero(lw >= row_max[:, None] - cfg.log_weight_floor)
        _, grads = q1d_with_grad(atoms[cols], xc[rows], tc[rows][:, None], K_cut)
        post = np.exp(lw[rows, cols] - row_max[rows])
        denom = np.bincount(rows, weights=post, minlength=xc.shape[0])
        for i in range(D):
            scores[start:start + chunk, i] = np.bincount(rows, weights=post * grads[:, i], minlength=xc.shape[0]) / denom

    return scores, log_p


def score_empirical_batch(
    target: EmpiricalTarget, x: np.ndarray, t, cfg: KernelConfig = DEFAULT_KERNEL
) -> Tuple[np.ndarray, np.ndarray, CutoffChoice]:
    """Truncated empirical score s_0^K and log p_t^K at many points."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    plan = cutoff_plan(float(np.max(t)), x.shape[1], cfg=cfg)
    scores, log_p = mixture_score(target.points, target.log_weights, x, t, plan.K_cut, cfg)
    return scores, log_p, plan


def score_empirical(target: EmpiricalTarget, x, t: float, cfg: KernelConfig = DEFAULT_KERNEL) -> ScoreEval:
    """
    Score of the forward marginal of an empirical target at one point.

    Posterior-weighted image gradients: sum_j w_j(x) grad log q_t(y_j, x)
    with w_j proportional to weight_j q_t(y_j, x). Equals grad log p_t^K.

    Example:
        >>> mu = make_point_mass([0.5])
        >>> score_empirical(mu, [0.5], 0.1).value
        array([0.])
    """
    scores, log_p, plan = score_empirical_batch(target, np.asarray(x, dtype=float)[None, :], t, cfg)
    return ScoreEval(value=scores[0], log_density=float(log_p[0]), cutoff_used=plan.K_cut, truncated=plan.truncated)


# ============================================================================
# Subspace-density oracle
# ============================================================================

def _half_window_rule(lo, hi, split, quad: QuadratureConfig, n_nodes: int):
    """Panels on [lo, split] and [split, hi] (split clipped into the window)."""
    split = np.clip(split, lo, hi)
    left_nodes, left_w = panel_rule(lo, split, quad.panels, n_nodes)
    right_nodes, right_w = panel_rule(split, hi, quad.panels, n_nodes)
    return np.concatenate([left_nodes, right_nodes], axis=-1), np.concatenate([left_w, right_w], axis=-1)


def _warn_if_coarse(width: float, n_nodes: int, t: float) -> None:
    spacing = width / n_nodes
    if spacing > 0.5 * math.sqrt(t):
        logger.warning(
            f"Quadrature node spacing {spacing:.3g} is coarse for t={t:g} "
            f"(sqrt(t)={math.sqrt(t):.3g}); increase n_nodes"
        )


def _ball_atoms(target: SubspaceTarget, t: float, quad: QuadratureConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes over the whole support as weighted ambient atoms."""
    r = target.radius
    if target.d == 1:
        nodes, w = _half_window_rule(np.array(-r), np.array(r), np.array(0.0), quad, quad.n_nodes_global)
        u = nodes[:, None]
        _warn_if_coarse(r / quad.panels, quad.n_nodes_global, t)
    else:
        axis, w_axis = _half_window_rule(np.array(-r), np.array(r), np.array(0.0), quad, quad.n_nodes_2d)
        _warn_if_coarse(r / quad.panels, quad.n_nodes_2d, t)
        u0, u1 = np.meshgrid(axis, axis, indexing="ij")
        u = np.stack([u0.ravel(), u1.ravel()], axis=1)
        w = np.outer(w_axis, w_axis).ravel()
    log_w = np.log(w) + target.log_density_u(u + target.center)
    keep = np.isfinite(log_w)
    return target.frame.to_ambient(u[keep] + target.center), log_w[keep]


def _plane_log_f1(target: SubspaceTarget, s: np.ndarray, t: float, quad: QuadratureConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    log f1 and f2 / f1 at plane offsets s (..., d) from the ball centre.

    f1(s) = int phi_t(s - u) q(u) du and f2 = grad f1 over a window of
    half-width window_sigmas * sqrt(t) around the nearest support point.
    """
    r = target.radius
    h = quad.window_sigmas * math.sqrt(t)
    d = target.d
    if d == 1:
        c = np.clip(s[..., 0], -r, r)
        nodes, w = _half_window_rule(np.maximum(-r, c - h), np.minimum(r, c + h), np.zeros_like(c), quad, quad.n_nodes)
        _warn_if_coarse(h / quad.panels, quad.n_nodes, t)
        u = nodes[..., None]
    else:
        norm = np.linalg.norm(s, axis=-1, keepdims=True)
        c = np.where(norm > r, s * r / np.maximum(norm, 1e-300), s)
        per_axis = []
        for k in range(2):
            per_axis.append(_half_window_rule(
                np.maximum(-r, c[..., k] - h), np.minimum(r, c[..., k] + h),
                np.zeros_like(c[..., k]), quad, quad.n_nodes_2d,
            ))
        _warn_if_coarse(h / quad.panels, quad.n_nodes_2d, t)
        (n0, w0), (n1, w1) = per_axis
        Q = n0.shape[-1]
        u = np.stack(np.broadcast_arrays(n0[..., :, None], n1[..., None, :]), axis=-1)
        u = u.reshape(u.shape[:-3] + (Q * Q, 2))
        w = (w0[..., :, None] * w1[..., None, :]).reshape(w0.shape[:-1] + (Q * Q,))

    disp = u - s[..., None, :]
    with np.errstate(divide="ignore"):
        log_k = np.log(w) + target.log_density_u(u + target.center) - np.sum(disp * disp, axis=-1) / (2.0 * t)
    lse = logsumexp(log_k, axis=-1)
    safe = np.where(np.isfinite(lse), lse, 0.0)
    post = np.exp(log_k - safe[..., None])
    ratio = np.sum(post[..., None] * disp, axis=-2) / t
    return lse - 0.5 * d * np.log(2.0 * np.pi * t), ratio


def score_subspace_batch(
    target: SubspaceTarget,
    x: np.ndarray,
    t: float,
    cfg: KernelConfig = DEFAULT_KERNEL,
    quad: QuadratureConfig = QuadratureConfig(),
) -> Tuple[np.ndarray, np.ndarray, CutoffChoice]:
    """
    Score and log-density of the forward marginal of a subspace target.

    For small t each image z contributes
    h1 = exp(-|x_perp|^2 / 2t) f1(x*) with x* = A^T(w - v0), x_perp the
    normal part, w = R_z(x) + z; the score is the softmax over images of
    (-1)^z (-x_perp / t + A f2/f1). Once the quadrature window covers the
    whole support, the nodes are shared by all images and the factorized
    mixture evaluation is used instead.

    Raises:
        UnsupportedError: d > 2
    """
    if target.d > 2:
        raise UnsupportedError(f"subspace oracle supports d <= 2, got d={target.d}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = float(_check_time(t))
    D = target.D
    plan = cutoff_plan(t, D, cfg=cfg)
    h = quad.window_sigmas * math.sqrt(t)

    if h >= 2.0 * target.radius:
        atoms, log_w = _ball_atoms(target, t, quad)
        scores, log_p = mixture_score(atoms, log_w, x, t, plan.K_cut, cfg)
        return scores, log_p, plan

    Z = image_lattice(plan.K_cut, D)
    sign = reflection_sign(Z)
    A, v0 = target.frame.A, target.frame.v0
    nodes_per_image = (2 * quad.panels * (quad.n_nodes if target.d == 1 else quad.n_nodes_2d)) ** target.d
    chunk = max(1, int(cfg.chunk_budget // (Z.shape[0] * nodes_per_image * (target.d + 2))))

    scores = np.zeros_like(x)
    log_p = np.zeros(x.shape[0])
    normal_const = -0.5 * (D - target.d) * np.log(2.0 * np.pi * t)
    for start in range(0, x.shape[0], chunk):
        w = reflect_image(Z[None, :, :], x[start:start + chunk, None, :]) - v0
        w_star = w @ A
        w_perp = w - w_star @ A.T
        log_f1, ratio = _plane_log_f1(target, w_star - target.center, t, quad)
        log_terms = normal_const - np.sum(w_perp * w_perp, axis=-1) / (2.0 * t) + log_f1
        grads = sign * (-w_perp / t + ratio @ A.T)
        lse = logsumexp(log_terms, axis=1)
        post = np.exp(log_terms - lse[:, None])
        scores[start:start + chunk] = np.sum(post[..., None] * grads, axis=1)
        log_p[start:start + chunk] = lse
    return scores, log_p, plan


def score_subspace_oracle(
    target: SubspaceTarget,
    x,
    t: float,
    cfg: KernelConfig = DEFAULT_KERNEL,
    quad: QuadratureConfig = QuadratureConfig(),
) -> ScoreEval:
    """Subspace-density score at one point (see score_subspace_batch)."""
    scores, log_p, plan = score_subspace_batch(target, np.asarray(x, dtype=float)[None, :], t, cfg, quad)
    return ScoreEval(value=scores[0], log_density=float(log_p[0]), cutoff_used=plan.K_cut, truncated=plan.truncated)


# ============================================================================
# Exact score handles
# ============================================================================

@dataclass
class ExactScore:
    """
    Callable s(x, t) backed by the kernel for a known target.

    Used as the oracle score in the sampler and as a baseline for learned
    models. The interval argument is accepted for signature compatibility
    with PiecewiseScore and ignored.
    """

    target: TargetMeasure
    cfg: KernelConfig = DEFAULT_KERNEL
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)

    def __call__(self, x: np.ndarray, t: float, interval: Optional[int] = None) -> np.ndarray:
        return self.evaluate(x, t)[0]

    def evaluate(self, x: np.ndarray, t) -> Tuple[np.ndarray, np.ndarray]:
        """Scores and log-densities at points x."""
        if isinstance(self.target, EmpiricalTarget):
            scores, log_p, _ = score_empirical_batch(self.target, x, t, self.cfg)
        else:
            scores, log_p, _ = score_subspace_batch(self.target, x, float(np.max(t)), self.cfg, self.quad)
        return scores, log_p


ScoreFunction = Union[ExactScore, Any]
