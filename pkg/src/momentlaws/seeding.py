"""Deterministic random streams, independent of worker count.

Every randomized routine derives its generator from (seed, stream tags)
through a counter-based Philox state, so replications can be sharded
across threads in any order without changing a single drawn number.
"""

from __future__ import annotations

import os

import numpy as np

DEFAULT_SEED = 0x5EED_CAFE

# Stream namespaces; first spawn-key element of every derived generator.
STREAM_SAMPLE = 0    # one-shot sampling
STREAM_QFORM = 1     # quadratic-form draws
STREAM_MC = 2        # replication engine, per-chunk
STREAM_RATE = 3      # rate reports, per (grid point, chunk)

# Replications are processed in fixed-size blocks; the block index (not the
# worker) keys the random stream, so results do not depend on thread count.
CHUNK_REPS = 256


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Generator for an independent stream keyed by (seed, *stream)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def worker_count() -> int:
    """Worker cap from MAL_THREADS (default 1); results never depend on it."""
    raw = os.environ.get("MAL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"MAL_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def run_chunks(n_chunks: int, fn):
    """Apply fn to chunk indices 0..n_chunks-1, results in index order."""
    workers = worker_count()
    if workers <= 1 or n_chunks <= 1:
        return [fn(c) for c in range(n_chunks)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=min(workers, n_chunks)) as pool:
        return list(pool.map(fn, range(n_chunks)))
