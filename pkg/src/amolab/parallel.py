"""Ordered process-pool map.  Results never depend on the worker count."""
from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def _apply_chunk(fn, chunk):
    return [fn(x) for x in chunk]


def ordered_map(fn, items, workers: int = 1, chunk_size: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally spread over ``workers`` processes.

    Items are cut into contiguous chunks and results reassembled in input order,
    so any reduction over the returned list sees the same sequence of values.
    """
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    if chunk_size is None:
        chunk_size = max(1, -(-len(items) // (4 * workers)))
    chunks = [items[i:i + chunk_size] for i in range(0, len(items), chunk_size)]
    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        parts = list(pool.map(_apply_chunk, [fn] * len(chunks), chunks))
    return [r for part in parts for r in part]


def map_rows(fn, thetas: np.ndarray, workers: int = 1, block: int = 64) -> np.ndarray:
    """Stack ``fn(block_of_thetas)`` row blocks for a 1-D array of phases."""
    thetas = np.asarray(thetas, dtype=float)
    blocks = [thetas[i:i + block] for i in range(0, thetas.shape[0], block)]
    if not blocks:
        return np.empty((0,))
    return np.concatenate(ordered_map(fn, blocks, workers, chunk_size=1 if workers > 1 else None), axis=0)
