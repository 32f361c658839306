"""
Denoising score-matching training on a geometric time grid.

Each interval [t_{i-1}, t_i) of the grid t_i = T_lo c^i gets its own
clipped network, trained on the Monte-Carlo loss

    (t_i - t_{i-1}) |s(x_t, t) - grad_x log q_t(y, x_t)|^2,
    t ~ U[t_{i-1}, t_i), x_t = fold(y + B_t),

whose mean is the time integral of the interval's denoising loss. The
piecewise estimator picks the model whose interval contains t.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import joblib
import numpy as np
from joblib import Parallel, delayed
from sklearn.metrics import mean_squared_error

from ..config import GRID_CONFIG, NET_CONFIG, TRAIN_CONFIG
from ..diffusion.cube_geometry import fold
from ..diffusion.kernel import DEFAULT_KERNEL, KernelConfig, choose_cutoff, grad_log_q, score_empirical_batch
from ..diffusion.targets import EmpiricalTarget, make_empirical_target
from ..utils.errors import ConfigurationError, DivergenceError, DomainError
from ..utils.progress_reporter import ProgressReporter
from ..utils.rng_utils import generator_state, restore_generator, stream
from .optimizers import make_optimizer
from .score_net import NetSpec, ScoreModel, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

ScoreFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ============================================================================
# Time grid
# ============================================================================

@dataclass(frozen=True)
class TimeGrid:
    """Geometric grid t_i = T_lo c^i, i = 0..K_intervals, with t_K = T_hi."""

    T_lo: float
    T_hi: float
    c: float
    K_intervals: int

    def __post_init__(self):
        if not 0 < self.T_lo < self.T_hi:
            raise ConfigurationError(f"need 0 < T_lo < T_hi, got {self.T_lo}, {self.T_hi}")
        if not 1.0 < self.c <= 2.0 + 1e-12:
            raise ConfigurationError(f"grid ratio c must lie in (1, 2], got {self.c}")
        if self.K_intervals < 1:
            raise ConfigurationError(f"need at least one interval, got {self.K_intervals}")
        end = self.T_lo * self.c ** self.K_intervals
        if abs(end - self.T_hi) > 1e-9 * self.T_hi:
            raise ConfigurationError(f"T_lo c^K = {end} does not reach T_hi = {self.T_hi}")

    @classmethod
    def from_endpoints(cls, T_lo: float, T_hi: float, c_max: float = GRID_CONFIG["c"]) -> "TimeGrid":
        """K = ceil(log(T_hi / T_lo) / log c_max), then c = (T_hi / T_lo)^(1/K)."""
        if not 0 < T_lo < T_hi:
            raise ConfigurationError(f"need 0 < T_lo < T_hi, got {T_lo}, {T_hi}")
        if not 1.0 < c_max <= 2.0:
            raise ConfigurationError(f"c must lie in (1, 2], got {c_max}")
        K = max(1, math.ceil(math.log(T_hi / T_lo) / math.log(c_max) - 1e-12))
        return cls(T_lo=float(T_lo), T_hi=float(T_hi), c=(T_hi / T_lo) ** (1.0 / K), K_intervals=K)

    @property
    def times(self) -> np.ndarray:
        """t_0 = T_lo, ..., t_K = T_hi (endpoints exact)."""
        times = self.T_lo * self.c ** np.arange(self.K_intervals + 1)
        times[0] = self.T_lo
        times[-1] = self.T_hi
        return times

    def bounds(self, i: int) -> Tuple[float, float]:
        """(t_{i-1}, t_i) for interval i in 1..K."""
        if not 1 <= i <= self.K_intervals:
            raise DomainError(f"interval index must lie in [1, {self.K_intervals}], got {i}")
        times = self.times
        return float(times[i - 1]), float(times[i])

    def interval_of(self, t: float) -> int:
        """Index i with t in [t_{i-1}, t_i); T_hi itself maps to the last interval."""
        i = int(np.searchsorted(self.times, t, side="right"))
        return min(max(i, 1), self.K_intervals)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def theorem_grid(n: int, D: int, d: int, alpha: float, c_max: float = GRID_CONFIG["c"]) -> TimeGrid:
    """
    Endpoints scaled with the sample size:
    T_lo = n^(-2(alpha+1)/(2alpha+d)) / D and
    T_hi = (8 / pi^2) log((8 D^(3/2) / pi) n^((alpha+1)/(2alpha+d))).
    """
    rate = (alpha + 1.0) / (2.0 * alpha + d)
    T_lo = n ** (-2.0 * rate) / D
    T_hi = (8.0 / math.pi ** 2) * math.log((8.0 * D ** 1.5 / math.pi) * n ** rate)
    return TimeGrid.from_endpoints(T_lo, T_hi, c_max)


def theorem_architecture(
    grid: TimeGrid,
    n: int,
    d: int,
    alpha: float,
    delta: float = NET_CONFIG["delta"],
    max_width: int = NET_CONFIG["max_width"],
    max_depth: int = NET_CONFIG["max_depth"],
) -> Tuple[int, List[int]]:
    """
    Desk-scale depth and per-interval widths:
    width_i = min(n^(d/(2alpha+d)), (t_i ^ 1)^(-d/2) n^(delta d/(2alpha+d))), depth ~ log n.
    """
    exponent = d / (2.0 * alpha + d)
    widths = []
    for t_i in grid.times[1:]:
        w = min(n ** exponent, min(t_i, 1.0) ** (-d / 2.0) * n ** (delta * exponent))
        widths.append(int(min(max_width, max(8, math.ceil(w)))))
    depth = int(min(max_depth, max(2, math.ceil(math.log(n) / 3.0))))
    return depth, widths


# ============================================================================
# Training configuration and loss
# ============================================================================

@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings shared by all intervals."""

    n_mc: int = TRAIN_CONFIG["n_mc"]
    batch: int = TRAIN_CONFIG["batch"]
    steps: int = TRAIN_CONFIG["steps"]
    lr: float = TRAIN_CONFIG["lr"]
    optimizer: str = TRAIN_CONFIG["optimizer"]
    beta1: float = TRAIN_CONFIG["beta1"]
    beta2: float = TRAIN_CONFIG["beta2"]
    eps: float = TRAIN_CONFIG["eps"]
    seed: int = 0
    clip_scale: float = NET_CONFIG["clip_scale"]
    kernel: KernelConfig = DEFAULT_KERNEL
    fixed_panel: bool = TRAIN_CONFIG["fixed_panel"]
    panel_size: int = TRAIN_CONFIG["panel_size"]
    log_every: int = TRAIN_CONFIG["log_every"]
    n_test: int = TRAIN_CONFIG["n_test"]
    stop_after: Optional[int] = TRAIN_CONFIG["stop_after"]

    def __post_init__(self):
        if self.n_mc < 1 or self.batch < 1 or self.steps < 0 or self.panel_size < 1:
            raise ConfigurationError("n_mc, batch and panel_size must be positive and steps non-negative")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


def _forward_draws(y: np.ndarray, t_lo: float, t_hi: float, rng: np.random.Generator):
    t = rng.uniform(t_lo, t_hi, size=y.shape[0])
    noise = rng.standard_normal(y.shape)
    return t, noise


def dsm_loss_sample(
    score: ScoreFn,
    y: np.ndarray,
    i: int,
    grid: TimeGrid,
    rng: np.random.Generator,
    n_mc: int = 1,
    kernel_cfg: KernelConfig = DEFAULT_KERNEL,
) -> float:
    """
    Monte-Carlo denoising loss for one data point on interval i.

    Averages (t_i - t_{i-1}) |s(x_t, t) - grad log q_t(y, x_t)|^2 over
    n_mc draws of t ~ U[t_{i-1}, t_i) and x_t = fold(y + sqrt(t) Z).

    Args:
        score: Callable s(x (m, D), t (m,)) -> (m, D)
        y: Data point (D,)
        i: Interval index in 1..K
        grid: Time grid
        rng: Caller-owned generator
        n_mc: Number of draws
    """
    t_lo, t_hi = grid.bounds(i)
    ys = np.repeat(np.atleast_2d(np.asarray(y, dtype=float)), n_mc, axis=0)
    t, noise = _forward_draws(ys, t_lo, t_hi, rng)
    x = fold(ys + np.sqrt(t)[:, None] * noise)
    K_cut = choose_cutoff(t_hi, ys.shape[1], cfg=kernel_cfg)
    target = grad_log_q(ys, x, t, K_cut=K_cut)
    diff = np.asarray(score(x, t)) - target
    return float((t_hi - t_lo) * np.mean(np.sum(diff * diff, axis=1)))


# ============================================================================
# Interval training state
# ============================================================================

@dataclass(eq=False)
class IntervalRun:
    """Everything needed to continue training one interval bit-exactly."""

    model: ScoreModel
    optimizer: Any
    rng: np.random.Generator
    steps_done: int = 0
    log: List[Dict[str, float]] = field(default_factory=list)
    panel: Optional[Dict[str, np.ndarray]] = None


def save_interval_state(run: IntervalRun, path: Union[str, Path]) -> Path:
    """Persist optimizer moments, generator state and counters next to a checkpoint."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    joblib.dump({
        "params": run.model.params,
        "optimizer": run.optimizer.state_dict(),
        "rng": generator_state(run.rng),
        "steps_done": run.steps_done,
        "log": run.log,
        "panel": run.panel,
    }, path)
    return path


def load_interval_state(run: IntervalRun, path: Union[str, Path]) -> IntervalRun:
    """Restore a run saved with save_interval_state."""
    state = joblib.load(path)
    run.model.params = np.asarray(state["params"], dtype=float).copy()
    run.optimizer.load_state_dict(state["optimizer"])
    run.rng = restore_generator(state["rng"])
    run.steps_done = int(state["steps_done"])
    run.log = list(state["log"])
    run.panel = state["panel"]
    return run


# ============================================================================
# Piecewise estimator
# ============================================================================

@dataclass(eq=False)
class PiecewiseScore:
    """sum_i s_i(x, t) 1{t in [t_{i-1}, t_i)} over the grid's intervals."""

    grid: TimeGrid
    models: List[ScoreModel]
    report: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.models) != self.grid.K_intervals:
            raise ConfigurationError(f"need {self.grid.K_intervals} models, got {len(self.models)}")

    def model_for(self, t: float) -> ScoreModel:
        return self.models[self.grid.interval_of(t) - 1]

    def __call__(self, x: np.ndarray, t: float, interval: Optional[int] = None) -> np.ndarray:
        """Score at time t; an explicit interval overrides the lookup (sampler substeps)."""
        model = self.models[interval - 1] if interval is not None else self.model_for(float(t))
        return model.forward(x, t)

    def weighted_error(self) -> float:
        """sum_i sqrt(t_i ^ 1) sqrt(err_i) over measured interval test errors."""
        errors = [m.meta.get("test_error") for m in self.models]
        if any(e is None for e in errors):
            return float("nan")
        times = self.grid.times[1:]
        return float(sum(math.sqrt(min(t, 1.0)) * math.sqrt(e) for t, e in zip(times, errors)))

    def save(self, directory: Union[str, Path]) -> List[Path]:
        directory = Path(directory)
        return [
            save_checkpoint(model, directory / f"interval_{i}.ckpt", {"grid": self.grid.to_dict()})
            for i, model in enumerate(self.models, start=1)
        ]

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "PiecewiseScore":
        directory = Path(directory)
        paths = sorted(directory.glob("interval_*.ckpt"), key=lambda p: int(p.stem.split("_")[1]))
        if not paths:
            raise FileNotFoundError(f"no interval checkpoints in {directory}")
        models = [load_checkpoint(p) for p in paths]
        grid = TimeGrid(**models[0].meta["grid"])
        return cls(grid=grid, models=models)


# ============================================================================
# Trainer
# ============================================================================

class DSMTrainer:
    """
    Per-interval empirical risk minimization of the denoising loss.

    Example:
        trainer = DSMTrainer(data, grid, TrainConfig(steps=500, seed=3))
        score = trainer.train_all(specs, workers=4, checkpoint_dir="out/run/checkpoints")
    """

    def __init__(self, data: np.ndarray, grid: TimeGrid, cfg: TrainConfig):
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if data.shape[0] == 0:
            raise DomainError("training data must be nonempty")
        self.data = data
        self.grid = grid
        self.cfg = cfg
        self.logger = logging.getLogger(__name__)
        self._empirical: Optional[EmpiricalTarget] = None

    @property
    def empirical(self) -> EmpiricalTarget:
        """Uniform point cloud on the training data (exact-score reference)."""
        if self._empirical is None:
            self._empirical = make_empirical_target(self.data)
        return self._empirical

    # ------------------------------------------------------------------

    def start_interval(self, i: int, spec: NetSpec) -> IntervalRun:
        """Fresh run for interval i: initialized model, optimizer and stream."""
        t_interval = self.grid.bounds(i)
        model = ScoreModel.initialize(spec, t_interval, self.data.shape[0], stream(self.cfg.seed, "init", i))
        model.meta.update({"interval": i, "seed": self.cfg.seed, "steps": self.cfg.steps})
        optimizer = make_optimizer(self.cfg.optimizer, self.cfg.lr, self.cfg.beta1, self.cfg.beta2, self.cfg.eps)
        return IntervalRun(model=model, optimizer=optimizer, rng=stream(self.cfg.seed, "train", i))

    def _draw_panel(self, run: IntervalRun, t_lo: float, t_hi: float) -> Dict[str, np.ndarray]:
        index = run.rng.integers(0, self.data.shape[0], size=self.cfg.panel_size)
        t, noise = _forward_draws(self.data[index], t_lo, t_hi, run.rng)
        return {"index": index, "t": t, "noise": noise}

    def _minibatch(self, run: IntervalRun, t_lo: float, t_hi: float):
        cfg = self.cfg
        if cfg.fixed_panel:
            if run.panel is None:
                run.panel = self._draw_panel(run, t_lo, t_hi)
            rows = run.rng.integers(0, cfg.panel_size, size=cfg.batch)
            y = self.data[run.panel["index"][rows]]
            return y, run.panel["t"][rows], run.panel["noise"][rows]
        index = run.rng.integers(0, self.data.shape[0], size=cfg.batch)
        y = np.repeat(self.data[index], cfg.n_mc, axis=0)
        t, noise = _forward_draws(y, t_lo, t_hi, run.rng)
        return y, t, noise

    def run_interval(self, run: IntervalRun, stop_after: Optional[int] = None) -> IntervalRun:
        """
        Advance a run up to cfg.steps (or stop_after) optimizer steps.

        Raises:
            DivergenceError: Non-finite loss or gradient
        """
        cfg = self.cfg
        model = run.model
        i = int(model.meta["interval"])
        t_lo, t_hi = model.t_interval
        width = t_hi - t_lo
        K_cut = choose_cutoff(t_hi, self.data.shape[1], cfg=cfg.kernel)
        last = cfg.steps if stop_after is None else min(cfg.steps, stop_after)

        reporter = ProgressReporter(f"Interval {i}", total=cfg.steps, logger=self.logger,
                                    report_interval=max(1, cfg.steps // 5))
        reporter.current = run.steps_done
        while run.steps_done < last:
            started = time.perf_counter()
            y, t, noise = self._minibatch(run, t_lo, t_hi)
            x = fold(y + np.sqrt(t)[:, None] * noise)
            target = grad_log_q(y, x, t, K_cut=K_cut)
            pred, cache = model.forward_with_cache(x, t)
            diff = pred - target
            loss = width * float(np.mean(np.sum(diff * diff, axis=1)))
            grad = model.backward(cache, 2.0 * width * diff / diff.shape[0])
            grad_norm = float(np.linalg.norm(grad))

            if not (np.isfinite(loss) and np.isfinite(grad_norm)):
                diagnostics = {
                    "interval": i, "step": run.steps_done, "loss": loss, "grad_norm": grad_norm,
                    "param_norm": float(np.linalg.norm(model.params)), "t_interval": [t_lo, t_hi],
                }
                reporter.error(f"non-finite loss at step {run.steps_done}")
                raise DivergenceError(f"interval {i} diverged at step {run.steps_done}", diagnostics)

            run.optimizer.step(model.params, grad)
            model.project_params()
            run.steps_done += 1

            if run.steps_done % cfg.log_every == 0 or run.steps_done == cfg.steps:
                run.log.append({
                    "step": run.steps_done, "interval": i, "loss": loss, "grad_norm": grad_norm,
                    "wall_ms": 1000.0 * (time.perf_counter() - started),
                })
            reporter.update(run.steps_done, loss=loss)

        if run.log:
            model.meta["final_loss"] = run.log[-1]["loss"]
        model.meta["steps_done"] = run.steps_done
        return run

    def interval_test_error(self, model: ScoreModel, rng: np.random.Generator) -> Dict[str, float]:
        """
        E|s - s_0|^2 on fresh forward samples of the training data, with s_0
        the exact empirical score; also E|s_0|^2 for scale.
        """
        t_lo, t_hi = model.t_interval
        y = self.data[rng.integers(0, self.data.shape[0], size=self.cfg.n_test)]
        t, noise = _forward_draws(y, t_lo, t_hi, rng)
        x = fold(y + np.sqrt(t)[:, None] * noise)
        exact, _, _ = score_empirical_batch(self.empirical, x, t, self.cfg.kernel)
        predicted = model.forward(x, t)
        error = float(np.sum(mean_squared_error(exact, predicted, multioutput="raw_values")))
        return {"test_error": error, "exact_sq_norm": float(np.mean(np.sum(exact * exact, axis=1)))}

    def train_interval(
        self,
        i: int,
        spec: NetSpec,
        checkpoint_dir: Optional[Union[str, Path]] = None,
        resume: bool = False,
    ) -> Tuple[ScoreModel, List[Dict[str, float]]]:
        """Train (or resume) interval i; returns the model and its log rows."""
        run = self.start_interval(i, spec)
        state_path = Path(checkpoint_dir) / f"interval_{i}.state" if checkpoint_dir else None
        if resume and state_path is not None and state_path.exists():
            load_interval_state(run, state_path)
            self.logger.info(f"↻ Interval {i}: resuming at step {run.steps_done}/{self.cfg.steps}")

        self.run_interval(run, self.cfg.stop_after)
        if run.steps_done >= self.cfg.steps:
            run.model.meta.update(self.interval_test_error(run.model, stream(self.cfg.seed, "test", i)))

        if checkpoint_dir is not None:
            save_interval_state(run, state_path)
            save_checkpoint(run.model, Path(checkpoint_dir) / f"interval_{i}.ckpt", {"grid": self.grid.to_dict()})
        return run.model, run.log

    def train_all(
        self,
        specs: Sequence[NetSpec],
        workers: int = 1,
        checkpoint_dir: Optional[Union[str, Path]] = None,
        resume: bool = False,
    ) -> PiecewiseScore:
        """
        Train every interval independently (in parallel when workers > 1).

        Each interval saves its checkpoint as soon as it finishes, so a
        divergence elsewhere leaves completed intervals on disk.
        """
        if len(specs) != self.grid.K_intervals:
            raise ConfigurationError(f"need {self.grid.K_intervals} net specs, got {len(specs)}")
        self.logger.info(
            f"Training {self.grid.K_intervals} intervals on n={self.data.shape[0]} points "
            f"(steps={self.cfg.steps}, batch={self.cfg.batch}, workers={workers})"
        )
        results = Parallel(n_jobs=workers)(
            delayed(self.train_interval)(i, spec, checkpoint_dir, resume)
            for i, spec in enumerate(specs, start=1)
        )
        models = [model for model, _ in results]
        log = [row for _, rows in results for row in rows]
        score = PiecewiseScore(grid=self.grid, models=models, report={"log": log})
        score.report["weighted_error"] = score.weighted_error()
        return score


def train_interval(data: np.ndarray, i: int, grid: TimeGrid, spec: NetSpec, cfg: TrainConfig) -> ScoreModel:
    """Train the network of interval i on data."""
    return DSMTrainer(data, grid, cfg).train_interval(i, spec)[0]


def train_all(data: np.ndarray, grid: TimeGrid, specs: Sequence[NetSpec], cfg: TrainConfig,
              workers: int = 1) -> PiecewiseScore:
    """Train all intervals and assemble the piecewise estimator."""
    return DSMTrainer(data, grid, cfg).train_all(specs, workers=workers)
