"""
Bound Verification Suites

Each suite sweeps one parameter, measures a quantity whose growth or decay
is controlled up to an unknown constant, and checks the shape of that
control: the constant is fitted on the first half of the sweep and the
inequality is validated on the second half. Suites are ordered so that
the fitted half is where the bound is tightest.

A violated bound or a failing computation yields a report with
passed=False; suites never raise.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import linregress

from ..config import VERIFY_CONFIG
from ..diffusion.cube_geometry import fold
from ..diffusion.forward_sim import sample_marginal, simulate_paths
from ..diffusion.kernel import (
    DEFAULT_KERNEL,
    ExactScore,
    KernelConfig,
    QuadratureConfig,
    choose_cutoff,
    grad_log_q,
    mixture_score,
    truncation_radius,
)
from ..diffusion.targets import EmpiricalTarget, make_subspace_target, make_two_atom_target, sample_target
from ..utils.errors import ConfigurationError
from ..utils.rng_utils import stream
from .distances import in_tube, sliced_w1, tv_to_uniform, w1_1d

logger = logging.getLogger(__name__)

TUBE_RHO = 2.0


@dataclass
class BoundReport:
    """
    Outcome of one suite.

    Attributes:
        name: Suite name
        param_name: Swept parameter ("t", "K", "rho", "y")
        params: Parameter values in sweep order
        measured: Measured quantity per parameter
        bound: Bound shape per parameter (without constant)
        fitted_constant: Constant fitted on the first half (or fixed)
        passed: Every validated point satisfies the inequality
        lower: True for lower bounds (measured >= C * bound)
        n_fit: Number of leading points used for the fit
    """

    name: str
    param_name: str
    params: List[float]
    measured: List[float]
    bound: List[float]
    fitted_constant: float
    passed: bool
    lower: bool = False
    n_fit: int = 0
    note: str = ""
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_rows(self) -> List[Dict[str, Any]]:
        """Flat rows: suite, param, measured, bound, scaled bound, fit flag, pass."""
        rows = []
        for k, (p, m, b) in enumerate(zip(self.params, self.measured, self.bound)):
            scaled = self.fitted_constant * b
            ok = m >= scaled if self.lower else m <= scaled
            rows.append({
                "suite": self.name, "param_name": self.param_name, "param": p, "measured": m,
                "bound": b, "scaled_bound": scaled, "in_fit": k < self.n_fit, "pass": bool(ok),
            })
        return rows


def fit_then_validate(
    name: str,
    param_name: str,
    params: Sequence[float],
    measured: Sequence[float],
    bound: Sequence[float],
    slack: float = VERIFY_CONFIG["slack"],
    lower: bool = False,
    constant: Optional[float] = None,
    note: str = "",
) -> BoundReport:
    """
    Fit C on the first half of the sweep, validate measured <= C * bound on the rest.

    For lower bounds the fitted constant is min(measured / bound) / slack and
    the validated inequality is measured >= C * bound. A given constant skips
    the fit and validates every point.
    """
    params = [float(p) for p in params]
    measured = np.asarray(measured, dtype=float)
    bound = np.asarray(bound, dtype=float)

    if constant is not None:
        n_fit = 0
        C = float(constant)
    else:
        n_fit = max(1, len(params) // 2)
        ratios = measured[:n_fit] / bound[:n_fit]
        C = float(slack * np.max(ratios)) if not lower else float(np.min(ratios) / slack)

    if not (np.all(np.isfinite(measured)) and np.all(np.isfinite(bound)) and np.isfinite(C)):
        passed = False
        note = (note + "; " if note else "") + "non-finite values"
    else:
        check = measured[n_fit:] >= C * bound[n_fit:] if lower else measured[n_fit:] <= C * bound[n_fit:]
        passed = bool(np.all(check))

    return BoundReport(
        name=name, param_name=param_name, params=params, measured=measured.tolist(),
        bound=bound.tolist(), fitted_constant=C, passed=passed, lower=lower, n_fit=n_fit, note=note,
    )


@dataclass(frozen=True, eq=False)
class VerifyContext:
    """Shared inputs of the suites."""

    target: EmpiricalTarget = field(default_factory=make_two_atom_target)
    slack: float = VERIFY_CONFIG["slack"]
    n_samples: int = VERIFY_CONFIG["n_samples"]
    n_brownian: int = VERIFY_CONFIG["n_brownian"]
    n_paths: int = VERIFY_CONFIG["n_paths"]
    truncation_slope: float = VERIFY_CONFIG["truncation_slope"]
    kernel: KernelConfig = DEFAULT_KERNEL
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None, target: Optional[EmpiricalTarget] = None,
                  kernel: KernelConfig = DEFAULT_KERNEL) -> "VerifyContext":
        data = {**VERIFY_CONFIG, **(data or {})}
        return cls(
            target=target if target is not None else make_two_atom_target(),
            slack=float(data["slack"]),
            n_samples=int(data["n_samples"]),
            n_brownian=int(data["n_brownian"]),
            n_paths=int(data["n_paths"]),
            truncation_slope=float(data["truncation_slope"]),
            kernel=kernel,
        )


# ============================================================================
# Suites
# ============================================================================

def suite_score_growth(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """sup_x |s_0(x, t)| against 1 / (t ^ sqrt(t)), t ascending."""
    t_values = np.geomspace(1e-4, 1.0, 24)
    x = np.linspace(0.0, 1.0, 1001)[:, None]
    D = ctx.target.D
    # rows are t-major: row = t_index * n_x + x_index
    xs = np.tile(np.tile(x, (1, D)), (t_values.size, 1))
    ts = np.repeat(t_values, x.shape[0])
    K_cut = choose_cutoff(float(t_values.max()), D, cfg=ctx.kernel)
    scores, _ = mixture_score(ctx.target.points, ctx.target.log_weights, xs, ts, K_cut, ctx.kernel)
    norms = np.linalg.norm(scores, axis=1).reshape(t_values.size, -1).max(axis=1)
    bound = 1.0 / np.minimum(t_values, np.sqrt(t_values))
    return fit_then_validate("score_growth", "t", t_values, norms, bound, ctx.slack)


def suite_tube_score(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """sup over forward samples inside the tube of |s_0| against sqrt(rho + log 1/t) / sqrt(t), t descending."""
    t_values = np.geomspace(0.3, 1e-4, 12)
    n = min(ctx.n_samples, 20_000)
    y = sample_target(ctx.target, n, rng)
    noise = rng.standard_normal(y.shape)
    measured = []
    for t in t_values:
        x = fold(y + math.sqrt(t) * noise)
        x = x[in_tube(x, ctx.target, t, TUBE_RHO)]
        if x.shape[0] == 0:
            measured.append(0.0)
            continue
        K_cut = choose_cutoff(t, x.shape[1], cfg=ctx.kernel)
        scores, _ = mixture_score(ctx.target.points, ctx.target.log_weights, x, t, K_cut, ctx.kernel)
        measured.append(float(np.linalg.norm(scores, axis=1).max()))
    bound = np.sqrt(TUBE_RHO + np.log(1.0 / t_values)) / np.sqrt(t_values)
    return fit_then_validate("tube_score", "t", t_values, measured, bound, ctx.slack,
                             note=f"rho={TUBE_RHO}, common forward noise")


def suite_tube_tail(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """E[|s_0(X_t)|^2 1{X_t outside the tube}] against e^(-rho) / (t^2 ^ 1), t descending."""
    t_values = np.geomspace(1e-2, 1e-5, 10)
    n = min(ctx.n_samples, 50_000)
    y = sample_target(ctx.target, n, rng)
    noise = rng.standard_normal(y.shape)
    measured = []
    for t in t_values:
        x = fold(y + math.sqrt(t) * noise)
        outside = ~in_tube(x, ctx.target, t, TUBE_RHO)
        if not np.any(outside):
            measured.append(0.0)
            continue
        K_cut = choose_cutoff(t, x.shape[1], cfg=ctx.kernel)
        scores, _ = mixture_score(ctx.target.points, ctx.target.log_weights, x[outside], t, K_cut, ctx.kernel)
        measured.append(float(np.sum(scores * scores) / n))
    bound = math.exp(-TUBE_RHO) / np.minimum(t_values ** 2, 1.0)
    return fit_then_validate("tube_tail", "t", t_values, measured, bound, ctx.slack, note=f"rho={TUBE_RHO}")


def suite_density_lower(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """
    min over tube points of p_t against t^((c0 - D)/2) e^(-rho) for a
    segment density in the square, t descending.
    """
    target = make_subspace_target(D=2, d=1, alpha=1, seed=int(rng.integers(2 ** 31)))
    t_values = np.geomspace(1e-3, 1e-5, 8)
    n = 2000
    u = target.center + target.radius * rng.uniform(-1.0, 1.0, size=(n, 1))
    direction = rng.standard_normal((n, target.D))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    reach = np.sqrt(rng.uniform(0.0, 1.0, size=(n, 1)))
    oracle = ExactScore(target, ctx.kernel, ctx.quad)
    measured = []
    for t in t_values:
        radius = math.sqrt(t * (target.D + 2.0 * TUBE_RHO))
        x = fold(target.frame.to_ambient(u) + radius * reach * direction)
        _, log_p = oracle.evaluate(x, t)
        measured.append(float(np.exp(log_p.min())))
    bound = t_values ** ((target.params.c0 - target.D) / 2.0) * math.exp(-TUBE_RHO)
    return fit_then_validate("density_lower", "t", t_values, measured, bound, ctx.slack, lower=True,
                             note=f"D=2, d=1, c0={target.params.c0:g}; one lumped constant")


def suite_q_gradient(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """max over random pairs of |grad_x log q_t(y, x)| / (|x - y| / t + 1 / sqrt(t)), t ascending."""
    t_values = np.geomspace(1e-4, 1.0, 12)
    D = 2
    y = rng.uniform(0.0, 1.0, size=(10_000, D))
    x = rng.uniform(0.0, 1.0, size=(10_000, D))
    dist = np.linalg.norm(x - y, axis=1)
    measured = []
    for t in t_values:
        grad = grad_log_q(y, x, np.full(x.shape[0], t), cfg=ctx.kernel)
        ratio = np.linalg.norm(grad, axis=1) / (dist / t + 1.0 / math.sqrt(t))
        measured.append(float(ratio.max()))
    return fit_then_validate("q_gradient", "t", t_values, measured, np.ones_like(t_values), ctx.slack,
                             note="measured is the ratio to the bound shape")


def suite_truncation(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """
    E|s_0 - s_0^K|^2 against K^(D/2) e^(-K) on K = 2..10 at t = 0.5, with
    a wide-lattice reference; also requires a negative log-linear slope.
    """
    t = 0.5
    D = ctx.target.D
    K_values = np.arange(2, 11)
    x = sample_marginal(ctx.target, t, min(ctx.n_samples, 20_000), rng)
    atoms, log_w = ctx.target.points, ctx.target.log_weights
    reference, _ = mixture_score(atoms, log_w, x, t, max(12, choose_cutoff(t, D, cfg=ctx.kernel) + 4), ctx.kernel)
    tiny = np.finfo(float).tiny
    measured = []
    for K in K_values:
        truncated, _ = mixture_score(atoms, log_w, x, t, max(1, truncation_radius(int(K), t, D)), ctx.kernel)
        measured.append(max(float(np.mean(np.sum((truncated - reference) ** 2, axis=1))), tiny))
    bound = K_values ** (D / 2.0) * np.exp(-K_values.astype(float))
    report = fit_then_validate("truncation", "K", K_values, measured, bound, ctx.slack,
                               note="errors floored at the smallest positive double")
    slope = float(linregress(K_values, np.log(measured)).slope)
    report.extra["log_slope"] = slope
    if slope > ctx.truncation_slope:
        report.passed = False
        report.note += f"; log-slope {slope:.3f} above {ctx.truncation_slope}"
    return report


def suite_early_stopping(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """W1(mu, X_t) against sqrt(D t) with constant 1 plus sampling slack 2/sqrt(n)."""
    t_values = np.array([1e-3, 1e-2, 1e-1])
    D = ctx.target.D
    n = ctx.n_samples
    reference = sample_target(ctx.target, n, rng)
    measured = []
    for t in t_values:
        x = sample_marginal(ctx.target, t, n, rng)
        measured.append(w1_1d(x[:, 0], reference[:, 0]) if D == 1 else sliced_w1(x, reference, rng=rng))
    slack = 2.0 / math.sqrt(n)
    bound = np.sqrt(D * t_values) + slack
    return fit_then_validate("early_stopping", "t", t_values, measured, bound, constant=1.0,
                             note=f"bound includes sampling slack {slack:.2e}")


def suite_ergodicity(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """TV(q_t(x0, .), uniform) against (4/pi) e^(-pi^2 t / 2) in D = 1 for several starts."""
    t_values = [0.25, 0.5, 1.0, 2.0]
    starts = [0.0, 0.25, 0.5]
    params, measured, bound = [], [], []
    for t in t_values:
        for x0 in starts:
            params.append(t)
            measured.append(tv_to_uniform([x0], t, cfg=ctx.kernel))
            bound.append(4.0 / math.pi * math.exp(-math.pi ** 2 * t / 2.0))
    report = fit_then_validate("ergodicity", "t", params, measured, bound, constant=1.0)
    report.extra["x0"] = starts * len(t_values)
    return report


def _chi_draws(ctx: VerifyContext, rng: np.random.Generator, k: int) -> np.ndarray:
    return np.linalg.norm(rng.standard_normal((ctx.n_brownian, k)), axis=1)


def suite_brownian_tail(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """P(|Z_3| > sqrt(3 + 2 rho)) against rho^(3/2) e^(-rho), rho ascending."""
    k = 3
    rho = np.arange(2, 11, dtype=float)
    norms = _chi_draws(ctx, rng, k)
    measured = [float(np.mean(norms > math.sqrt(k + 2.0 * r))) for r in rho]
    bound = rho ** (k / 2.0) * np.exp(-rho)
    return fit_then_validate("brownian_tail", "rho", rho, measured, bound, ctx.slack, note=f"k={k}")


def suite_brownian_tail_mean(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """E[|Z_3| 1{|Z_3| > sqrt(3 + 2 rho)}] against rho^2 e^(-rho), rho ascending."""
    k = 3
    rho = np.arange(2, 11, dtype=float)
    norms = _chi_draws(ctx, rng, k)
    measured = [float(np.mean(norms * (norms > math.sqrt(k + 2.0 * r)))) for r in rho]
    bound = rho ** ((k + 1) / 2.0) * np.exp(-rho)
    return fit_then_validate("brownian_tail_mean", "rho", rho, measured, bound, ctx.slack, note=f"k={k}")


def suite_path_band(ctx: VerifyContext, rng: np.random.Generator) -> BoundReport:
    """
    Band for reflected paths on [t, 1]: the (1 - 4D e^(-2y^2)) quantile of
    sup_s |X_s - X_0| / sqrt(D s) against log(1 + log 1/t) + y, y descending.
    """
    t_min = 1e-3
    D = ctx.target.D
    times = np.concatenate([[0.0], np.geomspace(t_min, 1.0, 40)])
    y0 = sample_target(ctx.target, ctx.n_paths, rng)
    paths = simulate_paths(y0, times, rng)
    excursion = np.linalg.norm(paths[:, 1:, :] - paths[:, :1, :], axis=2) / np.sqrt(D * times[1:])
    stat = excursion.max(axis=1)
    log_term = math.log(1.0 + math.log(1.0 / t_min))

    y_values = np.linspace(2.0, 1.0, 11)
    levels = 1.0 - 4.0 * D * np.exp(-2.0 * y_values ** 2)
    measured = [float(np.quantile(stat, max(level, 0.0), method="higher")) for level in levels]
    bound = log_term + y_values
    return fit_then_validate("path_band", "y", y_values, measured, bound, ctx.slack,
                             note=f"t in [{t_min:g}, 1], {ctx.n_paths} paths")


SUITES: Dict[str, Callable[[VerifyContext, np.random.Generator], BoundReport]] = {
    "early_stopping": suite_early_stopping,
    "ergodicity": suite_ergodicity,
    "score_growth": suite_score_growth,
    "tube_score": suite_tube_score,
    "tube_tail": suite_tube_tail,
    "q_gradient": suite_q_gradient,
    "truncation": suite_truncation,
    "brownian_tail": suite_brownian_tail,
    "brownian_tail_mean": suite_brownian_tail_mean,
    "density_lower": suite_density_lower,
    "path_band": suite_path_band,
}


def run_suite(name: str, ctx: VerifyContext, seed: int) -> BoundReport:
    """Run one suite on its own stream; failures become a failed report."""
    try:
        report = SUITES[name](ctx, stream(seed, "verify", list(SUITES).index(name)))
    except Exception as e:
        logger.error(f"Suite {name} failed: {e}")
        return BoundReport(name=name, param_name="", params=[], measured=[], bound=[],
                           fitted_constant=float("nan"), passed=False, note=f"{type(e).__name__}: {e}")
    status = "✓" if report.passed else "✗"
    logger.info(f"{status} {name}: C={report.fitted_constant:.4g} ({len(report.params)} points)")
    return report


def verify_bounds(
    suites: Optional[Sequence[str]] = None,
    ctx: Optional[VerifyContext] = None,
    seed: int = 0,
    workers: int = 1,
) -> List[BoundReport]:
    """
    Run the selected suites (all by default) and return reports in selection order.

    Raises:
        ConfigurationError: empty selection or unknown suite name
    """
    suites = list(VERIFY_CONFIG["suites"] if suites is None else suites)
    if not suites:
        raise ConfigurationError("suite selection is empty")
    unknown = [s for s in suites if s not in SUITES]
    if unknown:
        raise ConfigurationError(f"unknown suites {unknown}; available: {sorted(SUITES)}")
    ctx = ctx or VerifyContext()
    return Parallel(n_jobs=workers)(delayed(run_suite)(name, ctx, seed) for name in suites)
