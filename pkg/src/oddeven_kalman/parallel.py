"""Fork-join parallel loops over a thread pool.

A :class:`ForkJoinPool` runs ``parallel_for`` loops in chunks of ``chunk``
consecutive iterations. Chunks are pulled from a shared queue by idle
workers, which gives dynamic load balancing. With one thread every loop runs
inline, in order, performing exactly the same per-iteration arithmetic.

While a pool is open, BLAS libraries are limited to one thread so that the
only parallelism is across loop iterations.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

from threadpoolctl import threadpool_limits

DEFAULT_CHUNK = 10


def _run_range(body: Callable[[int], None], start: int, stop: int) -> None:
    for i in range(start, stop):
        body(i)


class ForkJoinPool:
    def __init__(self, threads: int = 1, chunk: int = DEFAULT_CHUNK):
        if threads < 1:
            raise ValueError("threads must be >= 1")
        if chunk < 1:
            raise ValueError("chunk must be >= 1")
        self.threads = threads
        self.chunk = chunk
        self._executor: ThreadPoolExecutor | None = None
        self._limits = None

    def __enter__(self) -> ForkJoinPool:
        self._limits = threadpool_limits(limits=1, user_api="blas")
        if self.threads > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.threads)
        return self

    def __exit__(self, *exc) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
        if self._limits is not None:
            self._limits.restore_original_limits()
            self._limits = None

    def parallel_for(self, count: int, body: Callable[[int], None]) -> None:
        """Run ``body(i)`` for ``i in range(count)`` and wait for all of them.

        If several iterations raise, the exception from the lowest chunk is
        propagated, independent of scheduling.
        """
        if self._executor is None or count <= self.chunk:
            _run_range(body, 0, count)
            return
        futures = [
            self._executor.submit(_run_range, body, start, min(start + self.chunk, count))
            for start in range(0, count, self.chunk)
        ]
        first_error = None
        for f in futures:
            err = f.exception()
            if err is not None and first_error is None:
                first_error = err
        if first_error is not None:
            raise first_error


def sequential() -> ForkJoinPool:
    return ForkJoinPool(threads=1)


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1
