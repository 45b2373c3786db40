"""Seed splitting and order-preserving parallel map."""

import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def stage_key(stage):
    return zlib.crc32(stage.encode("utf-8"))


def substream(seed, stage, *index):
    """Independent generator keyed by ``(seed, stage, *index)``.

    The stream depends only on the key, never on how many streams were
    drawn before it, so work can be split across threads or reordered
    freely.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(stage_key(stage), *map(int, index)))
    return np.random.Generator(np.random.PCG64(ss))


def subseed(seed, stage, *index):
    """A 63-bit integer seed derived like :func:`substream`."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(stage_key(stage), *map(int, index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def parallel_map(fn, items, threads=1):
    """``list(map(fn, items))``, optionally on a thread pool.

    Results come back in input order. Callers must chunk work independently
    of ``threads`` for results to be thread-count invariant.
    """
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunks(n, size):
    return [np.arange(start, min(start + size, n)) for start in range(0, n, size)]
