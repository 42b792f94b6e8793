"""Counter-based random streams.

Every stream is a Philox4x64-10 generator (numpy ``Philox``) keyed by
``(master_seed, stream_id)``. Independent chunks of a run use the same key and
start at counter ``(0, 0, 0, chunk)``; the low counter words advance as numbers
are drawn, so chunks never overlap unless a single chunk draws more than 2**192
blocks. Results therefore depend only on ``(master_seed, stream_id, chunk)``
and not on how chunks are scheduled across threads.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_id(name: str) -> int:
    """Stable 32-bit identifier for a named stream (CRC-32 of the name)."""
    return zlib.crc32(name.encode("utf-8"))


def substream(master_seed: int, name: str, chunk: int = 0) -> np.random.Generator:
    if chunk < 0:
        raise ValueError("chunk index must be non-negative")
    key = np.array([int(master_seed) & _MASK64, stream_id(name)], dtype=np.uint64)
    counter = np.array([0, 0, 0, chunk], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def chunk_bounds(n: int, chunk_size: int):
    """Yield ``(chunk_index, start, stop)`` covering ``range(n)``."""
    if chunk_size <= 0:
        raise ValueError("chunk_size must be positive")
    for k, start in enumerate(range(0, n, chunk_size)):
        yield k, start, min(start + chunk_size, n)
