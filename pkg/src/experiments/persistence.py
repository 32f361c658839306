"""
Run directories and provenance-stamped outputs.

Every CSV starts with ``# key: value`` provenance lines (creation time,
config hash, seed, git revision) followed by the table; every JSON file
carries the same fields under "provenance". Only the creation time
differs between repeated runs of one configuration.
"""

import json
import logging
import subprocess
from datetime import datetime
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from ..config import OUTPUT_CONFIG

logger = logging.getLogger(__name__)

CREATED_KEY = "created"


@lru_cache(maxsize=1)
def git_revision() -> str:
    """Current commit hash, or "unknown" outside a git checkout."""
    try:
        result = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
        return result.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def make_provenance(config_hash: str, seed: int) -> Dict[str, Any]:
    return {
        CREATED_KEY: datetime.now().isoformat(timespec="seconds"),
        "config_hash": config_hash,
        "seed": int(seed),
        "git_revision": git_revision(),
    }


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_csv(
    frame: pd.DataFrame,
    path: Union[str, Path],
    provenance: Dict[str, Any],
    float_format: str = OUTPUT_CONFIG["float_format"],
) -> Path:
    """Write a provenance block then the table (no index, fixed float format)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, value in provenance.items():
            f.write(f"# {key}: {value}\n")
        frame.to_csv(f, index=False, float_format=float_format, lineterminator="\n")
    logger.debug(f"✓ Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Read a table written by write_csv (provenance lines skipped)."""
    return pd.read_csv(path, comment="#")


def write_json(payload: Dict[str, Any], path: Union[str, Path], provenance: Optional[Dict[str, Any]] = None) -> Path:
    """Write sorted, indented JSON with an optional provenance object."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = dict(payload)
    if provenance is not None:
        document["provenance"] = provenance
    path.write_text(json.dumps(document, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def read_provenance(path: Union[str, Path]) -> Dict[str, str]:
    """Provenance lines at the top of a CSV written by write_csv."""
    provenance = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].rstrip("\n").partition(": ")
            provenance[key] = value
    return provenance


def comparable_lines(path: Union[str, Path]) -> List[str]:
    """File lines without the creation timestamp, for determinism checks."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line for line in lines if not line.startswith(f"# {CREATED_KEY}:") and f'"{CREATED_KEY}"' not in line]


class RunDirectory:
    """
    Layout of one run: out/<run-id>/{config.json, checkpoints/, samples.csv,
    metrics.json, reports/, train_log.csv, paths.csv}.
    """

    def __init__(self, output_dir: Union[str, Path], run_id: str, config_hash: str, seed: int):
        self.root = Path(output_dir) / run_id
        self.run_id = run_id
        self.config_hash = config_hash
        self.seed = seed
        self.logger = logging.getLogger(__name__)

    @property
    def config_json(self) -> Path:
        return self.root / "config.json"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def samples_csv(self) -> Path:
        return self.root / "samples.csv"

    @property
    def metrics_json(self) -> Path:
        return self.root / "metrics.json"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def train_log_csv(self) -> Path:
        return self.root / "train_log.csv"

    @property
    def paths_csv(self) -> Path:
        return self.root / "paths.csv"

    def create(self) -> "RunDirectory":
        self.root.mkdir(parents=True, exist_ok=True)
        self.logger.info(f"Run directory: {self.root}")
        return self

    def provenance(self) -> Dict[str, Any]:
        return make_provenance(self.config_hash, self.seed)

    def write_csv(self, frame: pd.DataFrame, path: Union[str, Path]) -> Path:
        return write_csv(frame, path, self.provenance())

    def write_json(self, payload: Dict[str, Any], path: Union[str, Path]) -> Path:
        return write_json(payload, path, self.provenance())
