"""Seeded, chunked Monte Carlo driver and jackknife error bars.

Every estimator draws its samples through :func:`collect`.  Samples are
produced in fixed-size chunks, each chunk owning an independent generator
spawned from the caller's seed, so the concatenated sample stream is the same
whether chunks run serially or on a thread pool.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, Union

import numpy as np

CHUNK_SIZE = 4096
JACKKNIFE_BLOCKS = 20

SeedLike = Union[int, Sequence[int]]


def derive_seed(seed: SeedLike, *names: str) -> tuple[int, ...]:
    """Namespace ``seed`` by one or more string labels.

    Two reports sharing a base seed but differing in name get unrelated
    streams.
    """
    base = (int(seed),) if np.isscalar(seed) else tuple(int(s) for s in seed)
    return base + tuple(zlib.crc32(name.encode("utf-8")) for name in names)


def chunk_generator(seed: SeedLike, index: int) -> np.random.Generator:
    entropy = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(index,)))


def collect(
    draw: Callable[[np.random.Generator, int], object],
    n: int,
    seed: SeedLike,
    jobs: int = 1,
):
    """Run ``draw(rng, size)`` over chunks and concatenate per-sample output.

    ``draw`` returns an array whose first axis is the sample axis, or a tuple
    of such arrays.  The result has the same structure with ``n`` rows.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    sizes = [CHUNK_SIZE] * (n // CHUNK_SIZE)
    if n % CHUNK_SIZE:
        sizes.append(n % CHUNK_SIZE)

    def run(k: int):
        return draw(chunk_generator(seed, k), sizes[k])

    if jobs > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(k) for k in range(len(sizes))]

    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))
    return np.concatenate(parts)


def jackknife(stat: Callable[..., float], *arrays: np.ndarray, n_blocks: int = JACKKNIFE_BLOCKS):
    """Delete-a-block jackknife.

    Returns ``(estimate, std_error)`` where the estimate is ``stat`` evaluated
    on the full sample.  Arrays are split along axis 0 into contiguous blocks.
    """
    n = len(arrays[0])
    full = stat(*arrays)
    n_blocks = min(n_blocks, n)
    if n_blocks < 2:
        return full, float("nan")
    edges = np.linspace(0, n, n_blocks + 1).astype(int)
    reps = []
    for b in range(n_blocks):
        keep = np.ones(n, dtype=bool)
        keep[edges[b] : edges[b + 1]] = False
        reps.append(stat(*(a[keep] for a in arrays)))
    reps = np.asarray(reps, dtype=float)
    centered = reps - reps.mean(axis=0)
    var = (n_blocks - 1) / n_blocks * np.sum(centered**2, axis=0)
    return full, np.sqrt(var)


def mean_and_se(values: np.ndarray) -> tuple[float, float]:
    """Sample mean with its jackknife standard error (block means, exact for a mean)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    n_blocks = min(JACKKNIFE_BLOCKS, n)
    if n_blocks < 2:
        return float(values.mean()), float("nan")
    edges = np.linspace(0, n, n_blocks + 1).astype(int)
    sums = np.add.reduceat(values, edges[:-1])
    counts = np.diff(edges)
    total = sums.sum()
    reps = (total - sums) / (n - counts)
    var = (n_blocks - 1) / n_blocks * np.sum((reps - reps.mean()) ** 2)
    return float(total / n), float(np.sqrt(var))
