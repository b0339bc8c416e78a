"""Parallel-in-time smoother based on an odd-even block-column QR factorization.

Block columns of the whitened system are eliminated recursively: at each
level the even-position columns of the surviving chain are finished (in
parallel, on disjoint block-row pairs) and the odd-position columns form a
chain of the same shape, half as long, that is handled at the next level.
"""

from __future__ import annotations

import time
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np

from . import kernels
from .factor import FactorBlocks, back_substitute, check_diagonal, row_norm_scale, timed_phase
from .model import SmoothResult, SmootherProblem, WhitenedStep, assemble
from .parallel import DEFAULT_CHUNK, ForkJoinPool

Array = np.ndarray


@dataclass(frozen=True)
class OddEvenPermutation:
    """Elimination order of block columns ``0..k``.

    ``levels[d]`` are the columns eliminated at recursion depth ``d``: the
    even positions of the chain that survives to that depth.
    """

    order: tuple[int, ...]
    level_of: tuple[int, ...]
    levels: tuple[tuple[int, ...], ...]

    @property
    def inverse(self) -> tuple[int, ...]:
        inv = [0] * len(self.order)
        for pos, col in enumerate(self.order):
            inv[col] = pos
        return tuple(inv)

    @property
    def depth(self) -> int:
        return len(self.levels)


def oddeven_permutation(k: int) -> OddEvenPermutation:
    if k < 0:
        raise ValueError("k must be >= 0")
    chain = list(range(k + 1))
    level_of = [0] * (k + 1)
    levels = []
    while chain:
        evens = chain[0::2]
        for c in evens:
            level_of[c] = len(levels)
        levels.append(tuple(evens))
        chain = chain[1::2]
    order = tuple(c for lvl in levels for c in lvl)
    return OddEvenPermutation(order, tuple(level_of), tuple(levels))


@dataclass
class _Chain:
    """Block rows still active at one recursion level.

    Position ``t`` owns a single-column row block ``C[t]`` and, for ``t >= 1``,
    a coupling row block ``[E[t] | D[t]]`` over columns ``t-1`` and ``t``
    (at the top level ``E = -B``).
    """

    cols: list[int]
    C: list[Array]
    rhsC: list[Array]
    E: list[Array | None]
    D: list[Array | None]
    rhsE: list[Array | None]
    reduced: bool


def _col(v: Array) -> Array:
    return v.reshape(-1, 1)


def _initial_chain(steps: list[WhitenedStep]) -> _Chain:
    return _Chain(
        cols=list(range(len(steps))),
        C=[s.C for s in steps],
        rhsC=[s.rhs_obs for s in steps],
        E=[None] + [-s.B for s in steps[1:]],
        D=[None] + [s.D for s in steps[1:]],
        rhsE=[None] + [s.rhs_evo for s in steps[1:]],
        reduced=False,
    )


def _eliminate_base(chain: _Chain, fb: FactorBlocks) -> None:
    j = chain.cols[0]
    C, rhs = chain.C[0], chain.rhsC[0]
    n = C.shape[1]
    if chain.reduced:
        R = C
    else:
        R, Q = kernels.qr2(C)
        rhs = kernels.apply_qt(Q, rhs)[0].ravel()
    check_diagonal(R, n, row_norm_scale(C), j)
    fb.rdiag[j] = R
    fb.rhs[j] = rhs


def factorize(steps: list[WhitenedStep], pool: ForkJoinPool | None = None) -> FactorBlocks:
    """Odd-even QR factorization of the whitened system, with ``Q^T`` applied to its RHS.

    Raises :class:`RankDeficient` naming the original block column whose
    diagonal block of ``R`` is singular to tolerance.
    """
    pool = pool or ForkJoinPool(threads=1)
    fb = FactorBlocks.empty(len(steps))
    chain = _initial_chain(steps)
    depth = 0
    while True:
        cols = chain.cols
        p = len(cols) - 1
        if p == 0:
            _eliminate_base(chain, fb)
            fb.level[cols[0]] = depth
            fb.levels.append([cols[0]])
            break

        width = [c.shape[1] for c in chain.C]
        reduced_obs: list[tuple[Array, Array] | None] = [None] * (p + 1)
        leftover: list[tuple[Array, Array | None, Array] | None] = [None] * (p + 1)

        def even_task(idx: int) -> None:
            t = 2 * idx
            j = cols[t]
            C, E = chain.C[t], chain.E[t]
            # stage 1: fold the coupling row to the right into the observation block
            if t < p:
                nr = width[t + 1]
                Rt, Q = kernels.qr2(C, chain.E[t + 1])
                scale = row_norm_scale(C, chain.E[t + 1])
                head, tail = kernels.apply_qt(
                    Q,
                    np.concatenate((np.zeros((C.shape[0], nr)), _col(chain.rhsC[t])), axis=1),
                    np.concatenate((chain.D[t + 1], _col(chain.rhsE[t + 1])), axis=1),
                )
                X, rhs_t = head[:, :nr], head[:, nr]
                reduced_obs[t + 1] = (tail[:, :nr], tail[:, nr])
            else:
                nr = 0
                Rt, X, rhs_t = C, None, chain.rhsC[t]
            if t == 0:
                check_diagonal(Rt, width[0], scale, j)
                fb.rdiag[j] = Rt
                fb.offdiag[j] = [(cols[1], X)]
                fb.rhs[j] = rhs_t
                return
            # stage 2: fold the coupling row to the left; both neighbours receive fill
            nl = width[t - 1]
            R, Q = kernels.qr2(chain.D[t], Rt)
            scale = row_norm_scale(chain.D[t], Rt)
            top = [E] + ([np.zeros((E.shape[0], nr))] if X is not None else []) + [_col(chain.rhsE[t])]
            bottom = [np.zeros((Rt.shape[0], nl))] + ([X] if X is not None else []) + [_col(rhs_t)]
            head, tail = kernels.apply_qt(Q, np.concatenate(top, axis=1), np.concatenate(bottom, axis=1))
            check_diagonal(R, width[t], scale, j)
            fb.rdiag[j] = R
            off = [(cols[t - 1], head[:, :nl])]
            if X is not None:
                off.append((cols[t + 1], head[:, nl:nl + nr]))
            fb.offdiag[j] = off
            fb.rhs[j] = head[:, -1]
            leftover[t] = (tail[:, :nl], tail[:, nl:nl + nr] if X is not None else None, tail[:, -1])

        pool.parallel_for(p // 2 + 1, even_task)

        next_C: list[Array | None] = [None] * (p + 1)
        next_rhs: list[Array | None] = [None] * (p + 1)

        def odd_task(idx: int) -> None:
            # stage 3: compress the rows that touch only this column
            t = 2 * idx + 1
            Dt, rhs_d = reduced_obs[t]
            blocks, rhs = [chain.C[t]], [chain.rhsC[t]]
            if t + 1 == p:
                Z, _, rhs_z = leftover[p]
                blocks.append(Z)
                rhs.append(rhs_z)
            Ct, Q = kernels.qr2(Dt, np.concatenate(blocks))
            next_C[t] = Ct
            next_rhs[t] = kernels.apply_qt(Q, rhs_d, np.concatenate(rhs))[0].ravel()

        pool.parallel_for((p + 1) // 2, odd_task)

        eliminated = cols[0::2]
        for j in eliminated:
            fb.level[j] = depth
        fb.levels.append(eliminated)
        odd = range(1, p + 1, 2)
        chain = _Chain(
            cols=[cols[t] for t in odd],
            C=[next_C[t] for t in odd],
            rhsC=[next_rhs[t] for t in odd],
            E=[None] + [leftover[t - 1][0] for t in odd if t >= 3],
            D=[None] + [leftover[t - 1][1] for t in odd if t >= 3],
            rhsE=[None] + [leftover[t - 1][2] for t in odd if t >= 3],
            reduced=True,
        )
        depth += 1
    return fb


def solve(factor: FactorBlocks, perm: OddEvenPermutation, pool: ForkJoinPool | None = None) -> list[Array]:
    """Back substitution in reverse elimination order; returns estimates by step."""
    if [list(lvl) for lvl in perm.levels] != factor.levels:
        raise ValueError("factor was not produced with this permutation")
    return back_substitute(factor, pool)


def smooth(
    problem: SmootherProblem,
    covariance: bool = True,
    threads: int = 1,
    chunk: int = DEFAULT_CHUNK,
    pool: ForkJoinPool | None = None,
) -> SmoothResult:
    """Smooth ``problem`` with the odd-even algorithm.

    With ``covariance=False`` (the "NC" variant) the selected-inversion phase
    is skipped. Per-phase wall-clock times land in ``result.timings``; solver
    errors carry the failing phase in their ``phase`` attribute.
    """
    from .covariance import selinv_oddeven

    timings: dict[str, float] = {}
    flops: dict[str, int] = {}
    start = time.perf_counter_ns()
    ctx = nullcontext(pool) if pool is not None else ForkJoinPool(threads, chunk)
    with ctx as pool:
        with timed_phase("assemble", timings, flops):
            steps = assemble(problem, pool)
        perm = oddeven_permutation(problem.k)
        with timed_phase("factorize", timings, flops):
            fb = factorize(steps, pool)
        with timed_phase("solve", timings, flops):
            estimates = solve(fb, perm, pool)
        result = SmoothResult(estimates=estimates, timings=timings, flops=flops)
        if covariance:
            with timed_phase("covariance", timings, flops):
                sel = selinv_oddeven(fb, perm, pool)
            result.covariances = sel.diag
            result.cross = sel.off
    timings["total"] = (time.perf_counter_ns() - start) * 1e-9
    if flops:
        flops["total"] = sum(flops.values())
    return result
