"""
Path-parallel map with index-ordered results.

Tasks receive a path index and must be picklable (module-level functions,
`functools.partial` over immutable models and arrays). Results always come back
in index order, so reductions are identical for any worker count.
"""

import multiprocessing
from functools import partial
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")


def _run_chunk(task: Callable[[int], T], indices: Sequence[int]) -> list[T]:
    return [task(index) for index in indices]


def map_paths(task: Callable[[int], T], count: int, workers: int = 1, offset: int = 0) -> list[T]:
    """
    Evaluates `task(offset + i)` for `i < count`.

    :param task: Picklable callable of the path index.
    :param count: Number of paths.
    :param workers: Worker processes, `1` runs inline.
    :param offset: First path index.
    :return: Results in index order.
    """
    indices = list(range(offset, offset + count))
    if workers <= 1 or count < 2:
        return _run_chunk(task, indices)

    chunks = [chunk.tolist() for chunk in np.array_split(indices, min(count, 4 * workers)) if chunk.size]
    methods = multiprocessing.get_all_start_methods()
    context = multiprocessing.get_context("fork" if "fork" in methods else None)
    with context.Pool(processes=workers) as pool:
        parts = pool.map(partial(_run_chunk, task), chunks)
    return [result for part in parts for result in part]
