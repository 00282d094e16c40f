"""Deterministic fan-out of independent replicate jobs.

Jobs carry their own derived seeds, so executing them in a process pool
changes wall time but not results: outputs are collected in submission
order and reduced exactly as in the serial path.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def map_jobs(
    fn: Callable[[T], R], jobs: Sequence[T], workers: int = 1
) -> list[R]:
    """Run ``fn`` over ``jobs``, optionally in ``workers`` processes.

    ``fn`` must be a module-level function and every job picklable when
    workers > 1. Results come back in job order either way.
    """
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    # jobs are coarse (whole runs or grid cells); chunksize 1 keeps slow
    # cells from piling up on one worker
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=1))
