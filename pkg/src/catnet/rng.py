"""Counter-based random streams keyed by (seed, tag, index).

Every random consumer in the package asks for a stream by a string tag
and an integer index (a path block, a check, a grid point).  Streams are
Philox generators seeded through ``SeedSequence`` spawn keys, so the
draws for a given key never depend on how work is scheduled.
"""
from __future__ import annotations

import hashlib
import os

import numpy as np

SEED_ENV = "CATNET_SEED"
DEFAULT_SEED = 20240101


def tag_key(tag: str) -> int:
    """Stable 32-bit integer derived from a tag string."""
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:4], "little")


def resolve_seed(seed: int | None = None) -> int:
    """Explicit seed, else the environment default, else a fixed constant."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return DEFAULT_SEED


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, tag, index)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag_key(tag), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def block_sizes(n_items: int, block_size: int) -> list[int]:
    """Split ``n_items`` into fixed-size blocks (last one possibly shorter)."""
    if n_items < 0:
        raise ValueError("n_items must be non-negative")
    if block_size <= 0:
        raise ValueError("block_size must be positive")
    full, rest = divmod(n_items, block_size)
    return [block_size] * full + ([rest] if rest else [])
