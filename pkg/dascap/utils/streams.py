# dascap/utils/streams.py
"""
Counter-based random streams and the worker fan-out used by the Monte-Carlo
and restart loops.

Every block of samples owns a generator derived from ``(seed, stream, block)``
alone, so the numbers a block sees never depend on how many workers share
the job or in which order blocks finish.
"""
import logging
from typing import Any, Callable, List, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

logger = logging.getLogger(__name__)

# Stream identifiers keep unrelated consumers of one seed apart.
MC_STREAM = 0
PLACEMENT_STREAM = 1
RESTART_STREAM = 2
ORACLE_STREAM = 3


def block_generator(seed: int, block: int, stream: int = MC_STREAM) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block))))


def block_layout(n_items: int, block_size: int) -> List[Tuple[int, int]]:
    """Split ``n_items`` into ``(block_index, size)`` pairs of at most ``block_size``."""
    if n_items < 0 or block_size < 1:
        raise ValueError("n_items must be >= 0 and block_size >= 1")
    blocks = []
    start, index = 0, 0
    while start < n_items:
        size = min(block_size, n_items - start)
        blocks.append((index, size))
        start += size
        index += 1
    return blocks


def fan_out(func: Callable[..., Any], jobs: Sequence[Tuple], n_workers: int = 1) -> List[Any]:
    """Run ``func(*job)`` for every job, in job order, on up to ``n_workers`` processes."""
    if n_workers <= 1 or len(jobs) <= 1:
        return [func(*job) for job in jobs]
    workers = min(n_workers, len(jobs))
    logger.debug(f"Dispatching {len(jobs)} jobs to {workers} workers")
    return Parallel(n_jobs=workers)(delayed(func)(*job) for job in jobs)
