"""
CLI commands: simulate, train, sample, verify, rate-study and kernel-dump.

Each command takes a validated ExperimentConfig, writes its outputs into
its run directory and returns a summary dict. Parallelism is delegated
to the library through the config's worker count.
"""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import linregress
from scipy.stats import t as student_t

from ..diffusion.forward_sim import occupation_local_time, simulate_forward, simulate_paths_parallel
from ..diffusion.kernel import ExactScore, KernelConfig, QuadratureConfig
from ..diffusion.targets import (
    EmpiricalTarget,
    MarginScaler,
    SubspaceTarget,
    TargetMeasure,
    load_target,
    make_empirical_target,
    make_point_mass,
    make_subspace_target,
    make_two_atom_target,
    sample_target,
    target_to_dict,
)
from ..metrics.bound_verifier import VerifyContext, verify_bounds
from ..ml.dsm_trainer import DSMTrainer, PiecewiseScore, TimeGrid, TrainConfig, theorem_architecture, theorem_grid
from ..ml.sampler import SampleConfig, generate_with_reference
from ..ml.score_net import NetSpec, make_specs
from ..utils.errors import ConfigurationError, DivergenceError, ReflectedDiffusionError
from ..utils.progress_reporter import ProgressReporter, report_section, report_stats, report_subsection, timed_stage
from ..utils.rng_utils import stream
from .experiment_config import ExperimentConfig
from .persistence import RunDirectory, read_csv, write_json

logger = logging.getLogger(__name__)


# ============================================================================
# Building blocks
# ============================================================================

def open_run(cfg: ExperimentConfig, command: str) -> RunDirectory:
    """Create out/<run-id> and store the resolved config."""
    config_hash = cfg.config_hash()
    train_hash = cfg.train_hash()
    # train runs are keyed on the training settings so any sample config finds them
    run_hash = train_hash if command == "train" else config_hash
    run_id = cfg.run_id or f"{command}-{run_hash[:10]}"
    run = RunDirectory(cfg.output_dir, run_id, config_hash, cfg.seed).create()
    write_json({"command": command, "config": cfg.to_dict(), "config_hash": config_hash, "train_hash": train_hash},
               run.config_json, run.provenance())
    return run


def build_target(cfg: ExperimentConfig) -> Tuple[TargetMeasure, Optional[MarginScaler], Optional[np.ndarray]]:
    """
    Target measure of the run, plus the margin scaler and observed data for CSV targets.

    Raises:
        ConfigurationError: Malformed target section
    """
    spec = cfg["target"]
    kind = spec["kind"]
    if kind == "two_atom":
        points = spec["points"]
        if len(points) != 2:
            raise ConfigurationError(f"two_atom target needs exactly two points, got {len(points)}")
        return make_empirical_target(points, spec["weights"]), None, None
    if kind == "point_mass":
        return make_point_mass(spec["points"][0]), None, None
    if kind == "empirical":
        return make_empirical_target(spec["points"], spec["weights"], spec["rho_min"]), None, None
    if kind == "subspace":
        target = make_subspace_target(
            spec["D"], spec["d"], alpha=spec["alpha"], c0=spec["c0"], seed=cfg.seed,
            bump_strength=spec["bump_strength"], rho_min=spec["rho_min"], radius=spec["radius"],
            radius_scale=spec["radius_scale"], jacobi_nodes=cfg["quadrature"]["jacobi_nodes"],
        )
        return target, None, None
    if kind == "json":
        return load_target(spec["path"]), None, None

    data = read_csv(spec["path"]).to_numpy(dtype=float)
    scaler = None
    if spec["rescale"]:
        scaler = MarginScaler.fit(data, spec["rho_min"])
        data = scaler.transform(data)
    return make_empirical_target(data), scaler, data


def training_data(cfg: ExperimentConfig, target: TargetMeasure, observed: Optional[np.ndarray]) -> np.ndarray:
    """Observed CSV rows, or n_train target draws on the data stream."""
    if observed is not None:
        return observed
    return sample_target(target, cfg["data"]["n_train"], stream(cfg.seed, "data"))


def intrinsic_dims(cfg: ExperimentConfig, target: TargetMeasure) -> Tuple[int, float]:
    """(d, alpha) entering the presets."""
    if isinstance(target, SubspaceTarget):
        return target.d, float(target.params.alpha)
    return int(cfg["target"]["d"]), float(cfg["target"]["alpha"])


def build_grid(cfg: ExperimentConfig, target: TargetMeasure, n: int) -> TimeGrid:
    grid = cfg["grid"]
    if grid["preset"] == "theorem":
        d, alpha = intrinsic_dims(cfg, target)
        return theorem_grid(n, target.D, d, alpha, grid["c"])
    return TimeGrid.from_endpoints(grid["T_lo"], grid["T_hi"], grid["c"])


def build_specs(cfg: ExperimentConfig, target: TargetMeasure, grid: TimeGrid, n: int) -> List[NetSpec]:
    net = cfg["net"]
    options = {"norm_bound": net["norm_bound"], "clip_scale": net["clip_scale"], "output_scaling": net["output_scaling"]}
    if net["preset"] == "theorem":
        d, alpha = intrinsic_dims(cfg, target)
        depth, widths = theorem_architecture(grid, n, d, alpha, net["delta"], net["max_width"], net["max_depth"])
        return make_specs(target.D, grid.K_intervals, depth=depth, widths_per_interval=widths, **options)
    return make_specs(target.D, grid.K_intervals, depth=net["depth"], width=net["width"], **options)


def build_train_config(cfg: ExperimentConfig) -> TrainConfig:
    train = cfg["train"]
    return TrainConfig(
        n_mc=train["n_mc"], batch=train["batch"], steps=train["steps"], lr=train["lr"],
        optimizer=train["optimizer"], beta1=train["beta1"], beta2=train["beta2"], eps=train["eps"],
        seed=cfg.seed, clip_scale=cfg["net"]["clip_scale"], kernel=kernel_config(cfg),
        fixed_panel=train["fixed_panel"], panel_size=train["panel_size"], log_every=train["log_every"],
        n_test=train["n_test"], stop_after=train["stop_after"],
    )


def kernel_config(cfg: ExperimentConfig) -> KernelConfig:
    return KernelConfig.from_dict(cfg["kernel"])


def quadrature_config(cfg: ExperimentConfig) -> QuadratureConfig:
    return QuadratureConfig.from_dict(cfg["quadrature"])


def sample_frame(x: np.ndarray, prefix: str = "x") -> pd.DataFrame:
    return pd.DataFrame(x, columns=[f"{prefix}{k}" for k in range(x.shape[1])])


# ============================================================================
# simulate
# ============================================================================

def cmd_simulate(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Forward reflected paths from target samples, one row per (path, time)."""
    report_section("FORWARD SIMULATION", logger)
    run = open_run(cfg, "simulate")
    sim = cfg["simulate"]
    target, _, _ = build_target(cfg)
    times = np.asarray(sim["times"], dtype=float)

    y0 = sample_target(target, sim["n_paths"], stream(cfg.seed, "data"))
    with timed_stage("simulating paths", logger):
        positions = simulate_paths_parallel(y0, times, cfg.seed, cfg.workers, sim["batch_size"])

    n_paths, n_times, D = positions.shape
    frame = sample_frame(positions.reshape(-1, D))
    frame.insert(0, "time", np.tile(times, n_paths))
    frame.insert(0, "path", np.repeat(np.arange(n_paths), n_times))
    if sim["write_paths"]:
        run.write_csv(frame, run.paths_csv)

    metrics: Dict[str, Any] = {
        "n_paths": n_paths,
        "times": times.tolist(),
        "marginal_mean": positions.mean(axis=0).tolist(),
        "marginal_std": positions.std(axis=0).tolist(),
    }
    eps = sim["local_time_eps"]
    if eps is not None:
        metrics["local_time"] = _local_times(target, times[-1], float(eps), min(n_paths, 100), cfg.seed)
    run.write_json(metrics, run.metrics_json)
    report_stats({"Paths": n_paths, "Times": n_times, "Rows": len(frame)}, logger)
    return {"run_dir": run.root, "rows": len(frame)}


def _local_times(target: TargetMeasure, horizon: float, eps: float, n_paths: int, seed: int) -> Dict[str, Any]:
    """Occupation estimate of L_horizon on a grid with dt = eps^2 / 16 (at most 10^5 steps)."""
    n_steps = int(min(1e5, max(100, math.ceil(16.0 * horizon / eps ** 2))))
    grid = np.linspace(0.0, horizon, n_steps + 1)
    rng = stream(seed, "local_time")
    starts = sample_target(target, n_paths, rng)
    values = [occupation_local_time(simulate_forward(y, grid, rng, keep_driver=False), eps) for y in starts]
    return {"eps": eps, "horizon": horizon, "n_steps": n_steps, "mean": float(np.mean(values)),
            "std": float(np.std(values)), "n_paths": n_paths}


# ============================================================================
# train
# ============================================================================

def cmd_train(cfg: ExperimentConfig, resume: bool = False) -> Dict[str, Any]:
    """
    One checkpoint per grid interval plus the training log and error report.

    Completed intervals stay on disk when another interval diverges; the
    divergence diagnostics go to reports/divergence.json.
    """
    report_section("DENOISING SCORE MATCHING", logger)
    run = open_run(cfg, "train")
    target, scaler, observed = build_target(cfg)
    data = training_data(cfg, target, observed)
    grid = build_grid(cfg, target, data.shape[0])
    specs = build_specs(cfg, target, grid, data.shape[0])
    if scaler is not None:
        write_json(scaler.to_dict(), run.root / "scaler.json", run.provenance())
    write_json(target_to_dict(target), run.root / "target.json", run.provenance())

    trainer = DSMTrainer(data, grid, build_train_config(cfg))
    try:
        with timed_stage(f"training {grid.K_intervals} intervals", logger):
            score = trainer.train_all(specs, workers=cfg.workers, checkpoint_dir=run.checkpoints, resume=resume)
    except DivergenceError as e:
        run.write_json({"error": str(e), "diagnostics": e.diagnostics}, run.reports / "divergence.json")
        raise

    run.write_csv(pd.DataFrame(score.report["log"], columns=["step", "interval", "loss", "grad_norm", "wall_ms"]),
                  run.train_log_csv)
    intervals = [
        {"interval": i, "t_lo": m.t_interval[0], "t_hi": m.t_interval[1], "width": m.spec.widths[1],
         "test_error": m.meta.get("test_error"), "exact_sq_norm": m.meta.get("exact_sq_norm"),
         "final_loss": m.meta.get("final_loss"), "steps_done": m.meta.get("steps_done")}
        for i, m in enumerate(score.models, start=1)
    ]
    metrics = {
        "n_train": int(data.shape[0]),
        "grid": grid.to_dict(),
        "intervals": intervals,
        "weighted_error": score.report["weighted_error"],
    }
    run.write_json(metrics, run.metrics_json)
    report_stats({"Intervals": grid.K_intervals, "Training points": int(data.shape[0]),
                  "Weighted error": score.report["weighted_error"]}, logger)
    return {"run_dir": run.root, "score": score, "metrics": metrics}


# ============================================================================
# sample
# ============================================================================

def locate_checkpoints(cfg: ExperimentConfig) -> Path:
    """Configured directory, or the checkpoints of the train run with the same training settings."""
    configured = cfg["sample"]["checkpoints"]
    if configured is not None:
        return Path(configured)
    directory = cfg.output_dir / f"train-{cfg.train_hash()[:10]}" / "checkpoints"
    if not any(directory.glob("interval_*.ckpt")):
        raise ConfigurationError(f"no checkpoints in {directory}; run 'train' with the same training settings first")
    return directory


def cmd_sample(cfg: ExperimentConfig, score: Optional[Any] = None) -> Dict[str, Any]:
    """Backward sampling with the learned or exact score; samples CSV and metrics JSON."""
    report_section("BACKWARD SAMPLING", logger)
    run = open_run(cfg, "sample")
    sample = cfg["sample"]
    target, scaler, observed = build_target(cfg)
    reference_target = target

    if score is None and sample["score"] == "exact":
        score = ExactScore(target, kernel_config(cfg), quadrature_config(cfg))
        n = observed.shape[0] if observed is not None else cfg["data"]["n_train"]
        grid = build_grid(cfg, target, n)
    else:
        score = score if score is not None else PiecewiseScore.load(locate_checkpoints(cfg))
        grid = score.grid
    if observed is not None:
        reference_target = make_empirical_target(observed)

    sample_cfg = SampleConfig(
        score=score, D=target.D, n_samples=sample["n_samples"],
        substeps_per_interval=sample["substeps_per_interval"], seed=cfg.seed, grid=grid,
        workers=cfg.workers, batch_size=sample["batch_size"], n_projections=sample["n_projections"],
    )
    with timed_stage("sampling", logger):
        samples, record = generate_with_reference(sample_cfg, reference_target)

    output = scaler.inverse_transform(samples) if scaler is not None else samples
    run.write_csv(sample_frame(output), run.samples_csv)
    record["score"] = "exact" if isinstance(score, ExactScore) else "learned"
    run.write_json(record, run.metrics_json)
    report_stats({"Samples": len(samples), "W1": record["w1"], "Uniform baseline": record["uniform_baseline"]}, logger)
    return {"run_dir": run.root, "samples": output, "metrics": record}


# ============================================================================
# verify
# ============================================================================

def cmd_verify(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Selected bound suites as reports/bounds.json and reports/bounds.csv."""
    report_section("BOUND VERIFICATION", logger)
    run = open_run(cfg, "verify")
    target, _, _ = build_target(cfg)
    suite_target = target if isinstance(target, EmpiricalTarget) else make_two_atom_target()
    ctx = VerifyContext.from_dict(cfg["verify"], suite_target, kernel_config(cfg))

    reports = verify_bounds(cfg["verify"]["suites"], ctx, cfg.seed, cfg.workers)
    all_passed = all(r.passed for r in reports)
    run.write_json({"reports": [r.to_dict() for r in reports], "all_passed": all_passed},
                   run.reports / "bounds.json")
    rows = [row for r in reports for row in r.to_rows()]
    run.write_csv(pd.DataFrame(rows, columns=["suite", "param_name", "param", "measured", "bound",
                                              "scaled_bound", "in_fit", "pass"]),
                  run.reports / "bounds.csv")
    report_stats({r.name: "pass" if r.passed else f"FAIL {r.note}" for r in reports}, logger)
    return {"run_dir": run.root, "reports": reports, "all_passed": all_passed}


# ============================================================================
# rate-study
# ============================================================================

def fit_rate(n_values: List[int], w1: List[float], level: float = 0.95) -> Dict[str, Any]:
    """Slope of log W1 against log n with a Student-t confidence interval."""
    n_arr = np.asarray(n_values, dtype=float)
    w_arr = np.asarray(w1, dtype=float)
    ok = np.isfinite(w_arr) & (w_arr > 0)
    if ok.sum() < 2:
        return {"slope": float("nan"), "intercept": float("nan"), "ci": [float("nan"), float("nan")],
                "n_points": int(ok.sum())}
    fit = linregress(np.log(n_arr[ok]), np.log(w_arr[ok]))
    dof = int(ok.sum()) - 2
    half = student_t.ppf(0.5 + level / 2.0, dof) * fit.stderr if dof > 0 else float("nan")
    return {"slope": float(fit.slope), "intercept": float(fit.intercept),
            "ci": [float(fit.slope - half), float(fit.slope + half)], "level": level,
            "r_value": float(fit.rvalue), "n_points": int(ok.sum())}


def _rate_point(cfg: ExperimentConfig, target: TargetMeasure, n: int, run: RunDirectory) -> Dict[str, Any]:
    data = sample_target(target, n, stream(cfg.seed, "data", n))
    grid = build_grid(cfg, target, n)
    specs = build_specs(cfg, target, grid, n)
    trainer = DSMTrainer(data, grid, build_train_config(cfg))
    score = trainer.train_all(specs, workers=cfg.workers, checkpoint_dir=run.root / f"n_{n}" / "checkpoints")
    sample = cfg["sample"]
    sample_cfg = SampleConfig(
        score=score, D=target.D, n_samples=sample["n_samples"],
        substeps_per_interval=sample["substeps_per_interval"], seed=cfg.seed, grid=grid,
        workers=cfg.workers, batch_size=sample["batch_size"], n_projections=sample["n_projections"],
    )
    _, record = generate_with_reference(sample_cfg, target, cfg["rate_study"]["n_reference"])
    return {"n": n, "w1": record["w1"], "uniform_baseline": record["uniform_baseline"],
            "weighted_error": score.report["weighted_error"], "K_intervals": grid.K_intervals, "error": ""}


def cmd_rate_study(cfg: ExperimentConfig, plot: bool = False) -> Dict[str, Any]:
    """Train and sample for each n on fresh data; failures are recorded per n."""
    report_section("RATE STUDY", logger)
    run = open_run(cfg, "rate-study")
    target, _, _ = build_target(cfg)
    n_values = list(cfg["rate_study"]["n_values"])

    reporter = ProgressReporter("Rate study", total=len(n_values), logger=logger, report_interval=1)
    rows = []
    for n in n_values:
        report_subsection(f"n = {n}", logger)
        try:
            rows.append(_rate_point(cfg, target, n, run))
        except ReflectedDiffusionError as e:
            logger.error(f"✗ n={n} failed: {e}")
            rows.append({"n": n, "w1": float("nan"), "uniform_baseline": float("nan"),
                         "weighted_error": float("nan"), "K_intervals": 0, "error": f"{type(e).__name__}: {e}"})
        reporter.update(w1=rows[-1]["w1"])
    reporter.complete()

    table = pd.DataFrame(rows, columns=["n", "w1", "uniform_baseline", "weighted_error", "K_intervals", "error"])
    fit = fit_rate(table["n"].tolist(), table["w1"].tolist())
    run.write_csv(table, run.reports / "rate_table.csv")
    run.write_json(fit, run.reports / "rate_fit.json")
    if plot:
        _plot_rate(table, fit, run.reports / "rate_study.png")
    report_stats({"Sizes": len(n_values), "Slope": fit["slope"]}, logger)
    return {"run_dir": run.root, "table": table, "fit": fit}


def _plot_rate(table: pd.DataFrame, fit: Dict[str, Any], path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(table["n"], table["w1"], "o-", label="generated")
    ax.loglog(table["n"], table["uniform_baseline"], "s--", label="uniform noise")
    ax.set_xlabel("n")
    ax.set_ylabel("W1 to target")
    ax.set_title(f"slope {fit['slope']:.3f}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ============================================================================
# kernel-dump
# ============================================================================

def cmd_kernel_dump(cfg: ExperimentConfig, plot: bool = False) -> Dict[str, Any]:
    """log p_t and the exact score on a line through the cube for each configured t."""
    report_section("KERNEL DUMP", logger)
    run = open_run(cfg, "kernel-dump")
    dump = cfg["kernel_dump"]
    target, _, _ = build_target(cfg)
    score = ExactScore(target, kernel_config(cfg), quadrature_config(cfg))

    line = np.linspace(0.0, 1.0, dump["n_points"])
    x = np.tile(line[:, None], (1, target.D))
    frames = []
    for t in dump["t_values"]:
        scores, log_p = score.evaluate(x, float(t))
        frame = sample_frame(x)
        frame.insert(0, "t", float(t))
        frame["log_p"] = log_p
        for k in range(target.D):
            frame[f"score{k}"] = scores[:, k]
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)
    path = run.write_csv(table, run.reports / "kernel_dump.csv")
    if plot:
        _plot_kernel(table, run.reports / "kernel_dump.png")
    return {"run_dir": run.root, "path": path, "rows": len(table)}


def _plot_kernel(table: pd.DataFrame, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4))
    for t, group in table.groupby("t"):
        left.plot(group["x0"], group["log_p"], label=f"t={t:g}")
        right.plot(group["x0"], group["score0"], label=f"t={t:g}")
    left.set_ylabel("log p_t")
    right.set_ylabel("score (first coordinate)")
    for ax in (left, right):
        ax.set_xlabel("x")
    left.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
