"""
Pytest configuration and shared fixtures for ReflectedDiffusion tests.

Provides seeded generators, the canonical targets and small
configurations that keep the CLI tests within seconds.
"""

import json
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pytest

from src.diffusion.targets import make_point_mass, make_subspace_target, make_two_atom_target
from src.experiments.experiment_config import build_config


# ============================================================================
# Random generators
# ============================================================================

@pytest.fixture
def rng() -> np.random.Generator:
    """Fresh seeded generator per test."""
    return np.random.default_rng(12345)


# ============================================================================
# Targets
# ============================================================================

@pytest.fixture(scope="session")
def two_atom():
    """Equal atoms at 0.3 and 0.7 on [0, 1]."""
    return make_two_atom_target()


@pytest.fixture(scope="session")
def centre_mass():
    """Dirac mass at the centre of [0, 1]."""
    return make_point_mass([0.5])


@pytest.fixture(scope="session")
def segment_target():
    """Smooth density on a segment through the centre of the square (D=2, d=1, alpha=1)."""
    return make_subspace_target(D=2, d=1, alpha=1, seed=3)


# ============================================================================
# Configurations and run directories
# ============================================================================

TINY_OVERRIDES: Dict[str, Any] = {
    "data": {"n_train": 64},
    "grid": {"T_lo": 0.01, "T_hi": 0.64, "c": 2.0},
    "net": {"depth": 1, "width": 8},
    "train": {"steps": 6, "batch": 16, "log_every": 2, "n_test": 32},
    "sample": {"n_samples": 40, "substeps_per_interval": 2, "batch_size": 16, "n_projections": 8},
    "simulate": {"n_paths": 5, "times": [0.0, 0.05, 0.5], "batch_size": 2},
    "verify": {"suites": ["ergodicity"], "n_samples": 2000, "n_brownian": 20000, "n_paths": 200},
    "rate_study": {"n_values": [32, 64], "n_reference": 64},
    "kernel_dump": {"t_values": [0.01, 0.1], "n_points": 11},
}


@pytest.fixture
def run_root(tmp_path: Path) -> Path:
    """Output directory for CLI runs."""
    return tmp_path / "out"


@pytest.fixture
def tiny_config(run_root: Path):
    """Validated config with tiny counts; two-atom target in D=1, seed 7."""
    return build_config(seed=7, output_dir=run_root, extra=TINY_OVERRIDES)


@pytest.fixture
def tiny_cli_args(run_root: Path):
    """Flag list for main() that reproduces tiny_config."""
    return cli_args_for(run_root)


def cli_args_for(out: Path, seed: int = 7):
    """--seed/--out/--set flags for the tiny configuration."""
    args = ["--seed", str(seed), "--out", str(out)]
    for section, values in TINY_OVERRIDES.items():
        for key, value in values.items():
            args += ["--set", f"{section}.{key}={json.dumps(value)}"]
    return args


@pytest.fixture
def make_cli_args():
    """Factory for tiny-config flag lists pointing at a given output directory."""
    return cli_args_for
