"""Chunked, seed-addressed execution of shot loops."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

from .rng import chunk_bounds, substream

T = TypeVar("T")

DEFAULT_CHUNK = 50_000


def run_chunked(work: Callable[[int, int, int, np.random.Generator], T], n: int, seed: int,
                stream: str, threads: int = 1, chunk_size: int = DEFAULT_CHUNK) -> list[T]:
    """Call ``work(chunk, start, stop, rng)`` for every chunk of ``range(n)``.

    Each chunk draws from its own substream, so the returned list (in chunk
    order) does not depend on ``threads``.
    """
    jobs = list(chunk_bounds(n, chunk_size))

    def call(job):
        k, a, b = job
        return work(k, a, b, substream(seed, stream, k))

    if threads <= 1 or len(jobs) == 1:
        return [call(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(call, jobs))
