"""Deterministic block-parallel execution helper."""

import os


def run_blocks(worker, n_blocks, workers=None):
    """Run ``worker(block_index)`` for every block index and return the
    results ordered by block index.

    Blocks own independent random substreams, so the output is identical
    whatever ``workers`` is; the thread pool only changes wall-clock time.
    """
    if workers is None:
        workers = min(os.cpu_count() or 1, 8)
    if workers <= 1 or n_blocks <= 1:
        return [worker(j) for j in range(n_blocks)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(worker, range(n_blocks)))
