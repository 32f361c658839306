"""
Clipped ReLU score network.

A feed-forward ReLU network on (x, tau(t)) whose output is scaled and
then radially clipped to the ball of radius C_clip sqrt(log n) / sqrt(t_i ^ 1).
Forward keeps every intermediate value so backward can run the exact
reverse-mode recursion, clip Jacobian included.
"""

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import NET_CONFIG
from ..utils.errors import ConfigurationError, CorruptedModelError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "reflected-diffusion-score-net"
CHECKPOINT_VERSION = 1
TIME_FEATURE_SLACK = 1e-9


@dataclass(frozen=True)
class NetSpec:
    """
    Architecture of one interval's network.

    Attributes:
        depth: Number of hidden layers L (>= 1)
        widths: Layer widths, length L + 2, first D + 1 and last D
        norm_bound: Entry bound B on all parameters (0 = unbounded)
        clip_scale: C_clip in the output clip radius
        interval_index: Interval i this network covers
        output_scaling: Multiply the raw output by 1 / sqrt(t_{i-1} ^ 1)
    """

    depth: int
    widths: Tuple[int, ...]
    norm_bound: float = NET_CONFIG["norm_bound"]
    clip_scale: float = NET_CONFIG["clip_scale"]
    interval_index: int = 1
    output_scaling: bool = NET_CONFIG["output_scaling"]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if self.depth < 1 or len(widths) != self.depth + 2:
            raise ConfigurationError(f"need depth >= 1 and depth + 2 widths, got depth={self.depth}, widths={widths}")
        if widths[0] != widths[-1] + 1:
            raise ConfigurationError(f"input width must be D + 1 for output width D, got {widths}")
        if self.norm_bound < 0:
            raise ConfigurationError(f"norm_bound must be >= 0, got {self.norm_bound}")

    @classmethod
    def uniform(cls, D: int, depth: int, width: int, **kwargs) -> "NetSpec":
        """depth hidden layers of equal width."""
        return cls(depth=depth, widths=(D + 1,) + (width,) * depth + (D,), **kwargs)

    @property
    def D(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        """Total parameter count; stands in for the sparsity S of the class."""
        return sum(a * b + b for a, b in zip(self.widths[:-1], self.widths[1:]))


def init_params(spec: NetSpec, rng: np.random.Generator) -> np.ndarray:
    """He-normal hidden layers, small output layer, zero biases."""
    chunks: List[np.ndarray] = []
    n_layers = len(spec.widths) - 1
    for k, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        std = math.sqrt(2.0 / fan_in) if k < n_layers - 1 else 0.1 / math.sqrt(fan_in)
        chunks.append(rng.standard_normal((fan_in, fan_out)).ravel() * std)
        chunks.append(np.zeros(fan_out))
    params = np.concatenate(chunks)
    if spec.norm_bound > 0:
        np.clip(params, -spec.norm_bound, spec.norm_bound, out=params)
    return params


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass."""

    activations: List[np.ndarray]
    pre_activations: List[np.ndarray]
    raw_output: np.ndarray
    norms: np.ndarray
    radius: float


@dataclass(eq=False)
class ScoreModel:
    """
    One interval's clipped score network.

    Attributes:
        spec: Architecture
        params: Flat parameter vector (W_0, b_0, W_1, b_1, ...)
        t_interval: (t_{i-1}, t_i)
        n_train: Training set size n entering the clip radius
        meta: Training metadata (losses, seed, steps, ...)
    """

    spec: NetSpec
    params: np.ndarray
    t_interval: Tuple[float, float]
    n_train: int
    meta: Dict[str, Any] = field(default_factory=dict)
    _warned: bool = field(default=False, init=False, repr=False)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (self.spec.n_params,):
            raise CorruptedModelError(f"expected {self.spec.n_params} parameters, got {self.params.shape}")
        t_lo, t_hi = (float(v) for v in self.t_interval)
        if not 0 < t_lo < t_hi:
            raise ConfigurationError(f"interval must satisfy 0 < t_lo < t_hi, got {self.t_interval}")
        self.t_interval = (t_lo, t_hi)

    @classmethod
    def initialize(cls, spec: NetSpec, t_interval: Tuple[float, float], n_train: int,
                   rng: np.random.Generator) -> "ScoreModel":
        return cls(spec=spec, params=init_params(spec, rng), t_interval=t_interval, n_train=n_train)

    def copy(self) -> "ScoreModel":
        return ScoreModel(spec=self.spec, params=self.params.copy(), t_interval=self.t_interval,
                          n_train=self.n_train, meta=dict(self.meta))

    # ------------------------------------------------------------------
    # Geometry of the output
    # ------------------------------------------------------------------

    @property
    def clip_radius(self) -> float:
        """C_clip sqrt(max(log n, 1)) / sqrt(t_i ^ 1)."""
        log_n = max(math.log(max(self.n_train, 1)), 1.0)
        return self.spec.clip_scale * math.sqrt(log_n) / math.sqrt(min(self.t_interval[1], 1.0))

    @property
    def output_scale(self) -> float:
        if not self.spec.output_scaling:
            return 1.0
        return 1.0 / math.sqrt(min(self.t_interval[0], 1.0))

    def time_feature(self, t) -> np.ndarray:
        """tau(t) = log(t / t_{i-1}) / log(t_i / t_{i-1}), in [0, 1] on the interval."""
        t_lo, t_hi = self.t_interval
        tau = np.log(np.asarray(t, dtype=float) / t_lo) / math.log(t_hi / t_lo)
        if not self._warned and (np.any(tau < -TIME_FEATURE_SLACK) or np.any(tau > 1.0 + TIME_FEATURE_SLACK)):
            logger.warning(
                f"Interval {self.spec.interval_index} model evaluated outside "
                f"[{t_lo:.4g}, {t_hi:.4g}); extrapolating"
            )
            self._warned = True
        return tau

    def _layers(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        layers = []
        offset = 0
        for fan_in, fan_out in zip(self.spec.widths[:-1], self.spec.widths[1:]):
            W = self.params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self.params[offset:offset + fan_out]
            offset += fan_out
            layers.append((W, b))
        return layers

    # ------------------------------------------------------------------
    # Forward / backward
    # ------------------------------------------------------------------

    def forward_with_cache(self, x: np.ndarray, t) -> Tuple[np.ndarray, ForwardCache]:
        """Clipped output (m, D) and the cache needed by backward."""
        if not np.all(np.isfinite(self.params)):
            raise CorruptedModelError(f"interval {self.spec.interval_index} model has non-finite parameters")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        tau = np.broadcast_to(self.time_feature(t), (x.shape[0],))
        a = np.concatenate([x, tau[:, None]], axis=1)

        activations = [a]
        pre_activations = []
        layers = self._layers()
        for W, b in layers[:-1]:
            z = a @ W + b
            a = np.maximum(z, 0.0)
            pre_activations.append(z)
            activations.append(a)
        W, b = layers[-1]
        raw = (a @ W + b) * self.output_scale

        radius = self.clip_radius
        norms = np.linalg.norm(raw, axis=1)
        factor = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
        out = raw * factor[:, None]
        return out, ForwardCache(activations, pre_activations, raw, norms, radius)

    def forward(self, x: np.ndarray, t) -> np.ndarray:
        """Clipped score s(x, t), shape (m, D)."""
        return self.forward_with_cache(x, t)[0]

    def backward(self, cache: ForwardCache, upstream: np.ndarray) -> np.ndarray:
        """
        Gradient over params of sum_rows <upstream, s(x, t)>.

        Inside the clip ball the clip is the identity; outside, its Jacobian
        is (R / |o|)(I - o o^T / |o|^2).
        """
        g = np.atleast_2d(np.asarray(upstream, dtype=float))
        o, norms, R = cache.raw_output, cache.norms, cache.radius
        outside = norms > R
        if np.any(outside):
            g = g.copy()
            oo = o[outside]
            nn = norms[outside][:, None]
            proj = np.sum(oo * g[outside], axis=1, keepdims=True) / nn ** 2
            g[outside] = (R / nn) * (g[outside] - oo * proj)

        delta = g * self.output_scale
        layers = self._layers()
        grads: List[np.ndarray] = []
        for k in range(len(layers) - 1, -1, -1):
            W, _ = layers[k]
            a_in = cache.activations[k]
            grads.append(delta.sum(axis=0))
            grads.append((a_in.T @ delta).ravel())
            if k > 0:
                delta = (delta @ W.T) * (cache.pre_activations[k - 1] > 0)
        return np.concatenate(grads[::-1])

    def project_params(self) -> "ScoreModel":
        """Clamp every parameter into [-B, B] in place (no-op when B = 0)."""
        B = self.spec.norm_bound
        if B > 0:
            np.clip(self.params, -B, B, out=self.params)
        return self

    def __call__(self, x: np.ndarray, t, interval: Optional[int] = None) -> np.ndarray:
        return self.forward(x, t)


def forward(model: ScoreModel, x: np.ndarray, t) -> np.ndarray:
    """Clipped network output at (x, t)."""
    return model.forward(x, t)


def backward(model: ScoreModel, x: np.ndarray, t, upstream: np.ndarray) -> np.ndarray:
    """Parameter gradient of <upstream, forward(model, x, t)> summed over rows."""
    _, cache = model.forward_with_cache(x, t)
    return model.backward(cache, upstream)


def project_params(model: ScoreModel) -> ScoreModel:
    """Entrywise clamp into [-B, B]; returns a new model."""
    projected = model.copy()
    return projected.project_params()


# ============================================================================
# Checkpoints
# ============================================================================

def save_checkpoint(model: ScoreModel, path: Union[str, Path], extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a checkpoint: 8-byte little-endian header length, UTF-8 JSON
    header, then the parameters as little-endian float64.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": asdict(model.spec),
        "t_interval": list(model.t_interval),
        "n_train": model.n_train,
        "n_params": int(model.params.size),
        "meta": {**model.meta, **(extra or {})},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(model.params.astype("<f8").tobytes())
    logger.debug(f"✓ Checkpoint saved: {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> ScoreModel:
    """
    Read a checkpoint written by save_checkpoint (bit-exact round trip).

    Raises:
        CorruptedModelError: Bad header, wrong length or non-finite values
    """
    raw = Path(path).read_bytes()
    try:
        (length,) = struct.unpack("<Q", raw[:8])
        header = json.loads(raw[8:8 + length].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptedModelError(f"unreadable checkpoint header in {path}") from e
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CorruptedModelError(f"{path} is not a score-net checkpoint")

    params = np.frombuffer(raw[8 + length:], dtype="<f8").astype(float)
    if params.size != header["n_params"]:
        raise CorruptedModelError(f"{path}: expected {header['n_params']} parameters, found {params.size}")
    if not np.all(np.isfinite(params)):
        raise CorruptedModelError(f"{path}: non-finite parameters")

    spec_data = header["spec"]
    spec_data["widths"] = tuple(spec_data["widths"])
    return ScoreModel(
        spec=NetSpec(**spec_data),
        params=params,
        t_interval=tuple(header["t_interval"]),
        n_train=int(header["n_train"]),
        meta=header["meta"],
    )


def make_specs(
    D: int,
    n_intervals: int,
    depth: int = NET_CONFIG["depth"],
    width: int = NET_CONFIG["width"],
    widths_per_interval: Optional[Sequence[int]] = None,
    **kwargs,
) -> List[NetSpec]:
    """One uniform-width spec per interval (interval indices 1..K)."""
    widths_per_interval = widths_per_interval or [width] * n_intervals
    return [
        NetSpec.uniform(D, depth, int(w), interval_index=i + 1, **kwargs)
        for i, w in enumerate(widths_per_interval)
    ]
