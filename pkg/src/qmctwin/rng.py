"""Deterministic random substreams.

Every Monte Carlo loop is cut into fixed-size blocks; block ``b`` of a run
seeded with ``seed`` draws from ``substream(seed, tag, b)`` so results do not
depend on how many workers process the blocks.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

SEED_MASK = (1 << 64) - 1


def _tag_int(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "little")


def substream(seed: int, *keys: int | str) -> np.random.Generator:
    entropy = [int(seed) & SEED_MASK]
    entropy += [_tag_int(k) if isinstance(k, str) else int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def stage_seed(seed: int, stage: str) -> int:
    """Hash a master seed and a stage name into an independent 64-bit seed."""
    digest = hashlib.sha256(f"{int(seed) & SEED_MASK}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def block_bounds(n: int, block: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + block, n)) for lo in range(0, n, block)]


def map_ordered(fn: Callable[..., T], items: Sequence, workers: int = 1) -> list[T]:
    """``[fn(x) for x in items]``, optionally on a thread pool; order is preserved."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
