"""Thread-count control for the per-node reductions."""

import os
from concurrent.futures import ThreadPoolExecutor

_threads = max(1, int(os.environ.get("METALENS_MMOT_THREADS", "1")))


def get_num_threads() -> int:
    return _threads


def set_num_threads(n: int) -> None:
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def map_row_blocks(func, n_rows: int, threads: int | None = None):
    """Apply ``func(start, stop)`` to contiguous row blocks; results come back in row order."""
    threads = _threads if threads is None else threads
    n_blocks = max(1, min(threads, n_rows))
    bounds = [(n_rows * b // n_blocks, n_rows * (b + 1) // n_blocks) for b in range(n_blocks)]
    if n_blocks == 1:
        return [func(*bounds[0])]
    with ThreadPoolExecutor(max_workers=n_blocks) as pool:
        return list(pool.map(lambda b: func(*b), bounds))
