"""Reproducible random streams.

Two counter-based sources are used:

* :func:`stream` hands out a :class:`numpy.random.Generator` backed by Philox,
  keyed by ``(seed, *ids)``.  Work is always keyed by a *logical* task index,
  so results do not depend on how tasks are spread over workers.
* :func:`counter_uniform` / :func:`counter_normal` / :func:`counter_symbols`
  evaluate an infinite i.i.d. sequence at arbitrary positions from a 64-bit
  key (SplitMix64 output function).  Noise paths are stored as ``(key, offset)``
  so shifting and lazily extending a path is exact and order independent.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def stream(seed: int, *ids: int) -> np.random.Generator:
    """Philox generator for task ``ids`` under master ``seed``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(i) for i in ids))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def random_keys(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 2**64, size=n, dtype=np.uint64, endpoint=False)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_bits(key, index) -> np.ndarray:
    """64 random bits at position ``index`` of the sequence named ``key``.

    ``key`` and ``index`` broadcast against each other.
    """
    key = np.asarray(key, dtype=np.uint64)
    index = np.asarray(index).astype(np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(key)
        return _mix(base + (index + np.uint64(1)) * _GAMMA)


def counter_uniform(key, index) -> np.ndarray:
    """Uniform variates in the open interval (0, 1)."""
    bits = counter_bits(key, index) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def counter_normal(key, index) -> np.ndarray:
    return ndtri(counter_uniform(key, index))


def counter_symbols(key, index, symbol_count: int) -> np.ndarray:
    u = counter_uniform(key, index)
    return np.minimum((u * symbol_count).astype(np.int64), symbol_count - 1)


def map_tasks(fn, items, workers: int = 1) -> list:
    """``[fn(i) for i in items]`` on a thread pool; results keep the input order.

    Every task draws from streams keyed by its own logical index, so the
    result does not depend on ``workers``.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
