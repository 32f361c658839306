"""
Experiment configuration: defaults, JSON files and dotted overrides.

The resolved configuration is a nested dict built by deep-merging, in
order, the defaults of src/config.py, an optional JSON file, repeated
``--set section.key=value`` overrides and the explicit CLI flags.
"""

import copy
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

from .. import config as defaults
from ..utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

SECTIONS: Dict[str, Dict[str, Any]] = {
    "kernel": defaults.KERNEL_CONFIG,
    "quadrature": defaults.QUADRATURE_CONFIG,
    "target": defaults.TARGET_CONFIG,
    "data": defaults.DATA_CONFIG,
    "grid": defaults.GRID_CONFIG,
    "net": defaults.NET_CONFIG,
    "train": defaults.TRAIN_CONFIG,
    "sample": defaults.SAMPLE_CONFIG,
    "simulate": defaults.SIMULATE_CONFIG,
    "verify": defaults.VERIFY_CONFIG,
    "rate_study": defaults.RATE_STUDY_CONFIG,
    "kernel_dump": defaults.KERNEL_DUMP_CONFIG,
}
TOP_LEVEL = {"schema_version", "seed", "run_id", "output_dir", "workers"}

# Keys that do not change results and stay out of the config hash.
HASH_EXCLUDED = ("workers", "output_dir", "run_id")

# Sections that determine trained checkpoints; sampling settings are not among them.
TRAIN_HASHED = ("schema_version", "seed", "target", "data", "grid", "net", "train", "kernel", "quadrature")

TARGET_KINDS = ("two_atom", "point_mass", "empirical", "subspace", "csv", "json")
PRESETS = (None, "theorem")


def default_config() -> Dict[str, Any]:
    """Fresh nested dict of all defaults."""
    resolved = {name: copy.deepcopy(section) for name, section in SECTIONS.items()}
    resolved.update({
        "schema_version": defaults.CONFIG_SCHEMA_VERSION,
        "seed": None,
        "run_id": None,
        "output_dir": defaults.OUTPUT_CONFIG["output_dir"],
        "workers": 1,
    })
    return resolved


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge override into a copy of base; non-dict values replace."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(item: str) -> Tuple[str, Any]:
    """
    Parse ``dotted.key=value``; the value is read as JSON when possible.

    Example:
        >>> parse_override("train.steps=200")
        ('train.steps', 200)
        >>> parse_override("target.kind=subspace")
        ('target.kind', 'subspace')
    """
    if "=" not in item:
        raise ConfigurationError(f"override {item!r} must look like key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigurationError(f"override {item!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def nest(key: str, value: Any) -> Dict[str, Any]:
    """'a.b.c', v -> {'a': {'b': {'c': v}}}."""
    nested: Dict[str, Any] = value
    for part in reversed(key.split(".")):
        nested = {part: nested}
    return nested


def _require_positive(section: Dict[str, Any], keys: Iterable[str], where: str, allow_zero: bool = False) -> None:
    for key in keys:
        value = section.get(key)
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) and (value >= 0 if allow_zero else value > 0)
        if not ok:
            bound = ">= 0" if allow_zero else "> 0"
            raise ConfigurationError(f"{where}.{key} must be {bound}, got {value!r}")


def validate_config(resolved: Dict[str, Any]) -> None:
    """
    Check a resolved configuration.

    Raises:
        ConfigurationError: unknown keys, wrong schema version, missing seed,
            non-positive counts, invalid grid, missing referenced files
    """
    unknown = set(resolved) - TOP_LEVEL - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    for name, section in SECTIONS.items():
        if not isinstance(resolved.get(name), dict):
            raise ConfigurationError(f"config section {name!r} must be an object")
        extra = set(resolved[name]) - set(section)
        if extra:
            raise ConfigurationError(f"unknown keys in {name!r}: {sorted(extra)}")

    if resolved.get("schema_version") != defaults.CONFIG_SCHEMA_VERSION:
        raise ConfigurationError(
            f"schema_version {resolved.get('schema_version')!r} is not supported "
            f"(expected {defaults.CONFIG_SCHEMA_VERSION})"
        )
    seed = resolved.get("seed")
    if seed is None:
        raise ConfigurationError("a seed is required (config 'seed' or --seed)")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}")
    workers = resolved.get("workers")
    if not isinstance(workers, int) or workers == 0 or workers < -1:
        raise ConfigurationError(f"workers must be a positive integer or -1, got {workers!r}")

    grid = resolved["grid"]
    _require_positive(grid, ("T_lo", "T_hi", "c"), "grid")
    if grid["T_lo"] >= grid["T_hi"]:
        raise ConfigurationError(f"grid.T_lo must be below grid.T_hi, got {grid['T_lo']} >= {grid['T_hi']}")
    if not 1.0 < grid["c"] <= 2.0:
        raise ConfigurationError(f"grid.c must lie in (1, 2], got {grid['c']}")
    if grid["preset"] not in PRESETS or resolved["net"]["preset"] not in PRESETS:
        raise ConfigurationError(f"presets must be one of {PRESETS}")

    _require_positive(resolved["data"], ("n_train",), "data")
    _require_positive(resolved["net"], ("depth", "width", "clip_scale", "max_width", "max_depth"), "net")
    _require_positive(resolved["train"], ("n_mc", "batch", "lr", "panel_size", "log_every", "n_test"), "train")
    _require_positive(resolved["train"], ("steps",), "train", allow_zero=True)
    _require_positive(resolved["sample"], ("n_samples", "substeps_per_interval", "batch_size", "n_projections"), "sample")
    _require_positive(resolved["simulate"], ("n_paths", "batch_size"), "simulate")
    _require_positive(resolved["verify"], ("slack", "n_samples", "n_brownian", "n_paths"), "verify")
    _require_positive(resolved["kernel_dump"], ("n_points",), "kernel_dump")

    n_values = resolved["rate_study"]["n_values"]
    if not n_values or any(not isinstance(n, int) or n < 1 for n in n_values):
        raise ConfigurationError(f"rate_study.n_values must be a nonempty list of positive integers, got {n_values!r}")
    suites = resolved["verify"]["suites"]
    unknown_suites = [s for s in suites if s not in defaults.VERIFY_CONFIG["suites"]]
    if not suites or unknown_suites:
        raise ConfigurationError(f"verify.suites must be a nonempty subset of {defaults.VERIFY_CONFIG['suites']}")
    if resolved["sample"]["score"] not in ("learned", "exact"):
        raise ConfigurationError(f"sample.score must be 'learned' or 'exact', got {resolved['sample']['score']!r}")
    if any(t <= 0 for t in resolved["kernel_dump"]["t_values"]):
        raise ConfigurationError("kernel_dump.t_values must be positive")

    target = resolved["target"]
    if target["kind"] not in TARGET_KINDS:
        raise ConfigurationError(f"target.kind must be one of {TARGET_KINDS}, got {target['kind']!r}")
    if target["kind"] in ("csv", "json"):
        if not target.get("path"):
            raise ConfigurationError(f"target.kind={target['kind']!r} needs target.path")
        if not Path(target["path"]).is_file():
            raise ConfigurationError(f"target file not found: {target['path']}")
    checkpoints = resolved["sample"].get("checkpoints")
    if checkpoints is not None and not Path(checkpoints).is_dir():
        raise ConfigurationError(f"checkpoint directory not found: {checkpoints}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully resolved configuration of one run."""

    values: Dict[str, Any]

    def __post_init__(self):
        validate_config(self.values)

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.values[section]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def workers(self) -> int:
        return int(self.values["workers"])

    @property
    def output_dir(self) -> Path:
        return Path(self.values["output_dir"])

    @property
    def run_id(self) -> Optional[str]:
        return self.values.get("run_id")

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.values)

    def hashed_content(self) -> Dict[str, Any]:
        return {k: v for k, v in self.values.items() if k not in HASH_EXCLUDED}

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the result-relevant settings."""
        canonical = json.dumps(self.hashed_content(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def train_hash(self) -> str:
        """SHA-256 over the settings that determine trained checkpoints only."""
        content = {k: v for k, v in self.values.items() if k in TRAIN_HASHED}
        canonical = json.dumps(content, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, **sections: Dict[str, Any]) -> "ExperimentConfig":
        """Copy with some sections merged over."""
        return ExperimentConfig(deep_merge(self.values, sections))


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must contain a JSON object")
    return data


def build_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    output_dir: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Resolve defaults <- file <- overrides <- flags into an ExperimentConfig.

    Example:
        cfg = build_config("exp.json", ["train.steps=200"], seed=3)
    """
    resolved = default_config()
    if path is not None:
        resolved = deep_merge(resolved, load_config_file(path))
    if extra:
        resolved = deep_merge(resolved, extra)
    for item in overrides:
        key, value = parse_override(item)
        resolved = deep_merge(resolved, nest(key, value))
    flags = {"seed": seed, "output_dir": str(output_dir) if output_dir is not None else None, "workers": workers}
    resolved = deep_merge(resolved, {k: v for k, v in flags.items() if v is not None})
    return ExperimentConfig(resolved)
