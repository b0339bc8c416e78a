"""Block-sparse triangular factors and level-ordered back substitution."""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import KalmanError, RankDeficient

Array = np.ndarray


@dataclass
class FactorBlocks:
    """The ``R`` factor of a column-permuted whitened system, block by block.

    Everything is indexed by original block column ``j``: ``rdiag[j]`` is the
    upper-triangular diagonal block, ``offdiag[j]`` lists at most two
    ``(column, block)`` pairs in block row ``j``, ``rhs[j]`` is the matching
    piece of the transformed right-hand side and ``level[j]`` the elimination
    level. ``levels[d]`` lists the columns eliminated at level ``d``; every
    off-diagonal column of a row belongs to a strictly later level.
    """

    rdiag: list[Array | None]
    offdiag: list[list[tuple[int, Array]]]
    rhs: list[Array | None]
    level: list[int]
    levels: list[list[int]] = field(default_factory=list)

    @classmethod
    def empty(cls, count: int) -> FactorBlocks:
        return cls(
            rdiag=[None] * count,
            offdiag=[[] for _ in range(count)],
            rhs=[None] * count,
            level=[-1] * count,
        )

    @property
    def count(self) -> int:
        return len(self.rdiag)

    def block_count(self) -> int:
        return self.count + sum(len(o) for o in self.offdiag)

    def pattern(self) -> list[set[int]]:
        """Off-diagonal column set of every block row."""
        return [{i for i, _ in row} for row in self.offdiag]


def row_norm_scale(*blocks: Array) -> float:
    """Largest Euclidean row norm over the given blocks."""
    best = 0.0
    for b in blocks:
        if b is not None and b.size:
            best = max(best, float(np.max(np.einsum("ij,ij->i", b, b))))
    return float(np.sqrt(best))


def check_diagonal(R: Array, n: int, scale: float, column: int) -> None:
    """Raise :class:`RankDeficient` unless ``R`` is a usable n-by-n diagonal block."""
    if R.shape[0] < n:
        raise RankDeficient(column, f"only {R.shape[0]} of {n} rows survive")
    if n and float(np.min(np.diagonal(R))) <= kernels.SINGULAR_RTOL * scale:
        raise RankDeficient(column, "diagonal entry below tolerance")


def back_substitute(factor: FactorBlocks, pool=None) -> list[Array]:
    """Solve ``R y = rhs`` level by level, deepest level first."""
    y: list[Array | None] = [None] * factor.count

    def body_for(cols):
        def body(idx):
            j = cols[idx]
            r = factor.rhs[j]
            for i, blk in factor.offdiag[j]:
                r = kernels.gemm(blk, y[i], alpha=-1.0, beta=1.0, C=r)
            y[j] = kernels.trsm_upper(factor.rdiag[j], r, position=j)
        return body

    for cols in reversed(factor.levels):
        body = body_for(cols)
        if pool is None:
            for idx in range(len(cols)):
                body(idx)
        else:
            pool.parallel_for(len(cols), body)
    return y  # type: ignore[return-value]


@contextmanager
def timed_phase(name: str, timings: dict[str, float], flops: dict[str, int] | None = None):
    """Time a smoother phase and tag any solver error with the phase name.

    If a flop counter is active and ``flops`` is given, the phase's count is
    recorded there as well.
    """
    counter = kernels._active_counter
    before = counter.total if counter is not None else 0
    start = time.perf_counter_ns()
    try:
        yield
    except KalmanError as err:
        if err.phase is None:
            err.phase = name
        raise
    finally:
        timings[name] = (time.perf_counter_ns() - start) * 1e-9
        if flops is not None and counter is not None:
            flops[name] = counter.total - before
