"""
Random Stream Utilities

All randomness is drawn from numpy Generators built on SeedSequence
entropy keyed by (seed, purpose, *keys), so a stream never depends on
worker count or on the order in which other streams were consumed.
"""

import zlib
from typing import Any, Dict

import numpy as np


def purpose_code(purpose: str) -> int:
    """Stable 32-bit integer for a stream purpose name."""
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """
    Build an independent generator for one purpose.

    Args:
        seed: Experiment seed (non-negative integer)
        purpose: Stream name, e.g. "data", "train", "sample"
        *keys: Extra integer keys (interval index, batch index, n, ...)

    Returns:
        numpy Generator (PCG64)

    Example:
        rng = stream(7, "train", 3)  # interval 3 of seed 7
    """
    entropy = [int(seed), purpose_code(purpose), *[int(k) for k in keys]]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def generator_state(rng: np.random.Generator) -> Dict[str, Any]:
    """JSON-serialisable bit generator state."""
    return rng.bit_generator.state


def restore_generator(state: Dict[str, Any]) -> np.random.Generator:
    """Rebuild a PCG64 generator from a saved state."""
    bit_generator = np.random.PCG64()
    bit_generator.state = state
    return np.random.Generator(bit_generator)
