"""Sequential reference smoothers and a dense brute-force oracle."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import kernels
from .covariance import selinv_sequential
from .errors import ContractError, RankDeficient, SingularInnovation, UnsupportedProblem
from .factor import FactorBlocks, back_substitute, check_diagonal, row_norm_scale, timed_phase
from .model import SmoothResult, SmootherProblem, WhitenedStep, assemble, validate

Array = np.ndarray

# Block-bidiagonal R: one super-diagonal block per column except the last.
BidiagonalFactor = FactorBlocks


def paige_saunders_factorize(steps: list[WhitenedStep]) -> BidiagonalFactor:
    """Left-to-right QR of the whitened system, producing a block-bidiagonal ``R``.

    For each column the carried-over rows and the observation rows are first
    compressed to a triangle, which is then folded together with the next
    coupling row.
    """
    count = len(steps)
    fb = FactorBlocks.empty(count)
    carry: tuple[Array, Array] | None = None
    for j, s in enumerate(steps):
        n = s.n
        if carry is None:
            A, b = s.C, s.rhs_obs
        else:
            A, Q = kernels.qr2(carry[0], s.C)
            b = kernels.apply_qt(Q, carry[1], s.rhs_obs)[0].ravel()
        if j == count - 1:
            if carry is None:
                R, Q = kernels.qr2(A)
                b = kernels.apply_qt(Q, b)[0].ravel()
                scale = row_norm_scale(A)
            else:
                R = A
                scale = row_norm_scale(carry[0], s.C)
            check_diagonal(R, n, scale, j)
            fb.rdiag[j], fb.rhs[j] = R, b
        else:
            nxt = steps[j + 1]
            nn = nxt.n
            R, Q = kernels.qr2(A, -nxt.B)
            head, tail = kernels.apply_qt(
                Q,
                np.hstack((np.zeros((A.shape[0], nn)), b.reshape(-1, 1))),
                np.hstack((nxt.D, nxt.rhs_evo.reshape(-1, 1))),
            )
            check_diagonal(R, n, row_norm_scale(A, nxt.B), j)
            fb.rdiag[j] = R
            fb.offdiag[j] = [(j + 1, head[:, :nn])]
            fb.rhs[j] = head[:, nn]
            carry = (tail[:, :nn], tail[:, nn])
        fb.level[j] = j
        fb.levels.append([j])
    return fb


def paige_saunders_smooth(problem: SmootherProblem, covariance: bool = True) -> SmoothResult:
    timings: dict[str, float] = {}
    flops: dict[str, int] = {}
    start = time.perf_counter_ns()
    with timed_phase("assemble", timings, flops):
        steps = assemble(problem)
    with timed_phase("factorize", timings, flops):
        fb = paige_saunders_factorize(steps)
    with timed_phase("solve", timings, flops):
        estimates = back_substitute(fb)
    result = SmoothResult(estimates=estimates, timings=timings, flops=flops)
    if covariance:
        with timed_phase("covariance", timings, flops):
            sel = selinv_sequential(fb)
        result.covariances = sel.diag
        result.cross = sel.off
    timings["total"] = (time.perf_counter_ns() - start) * 1e-9
    if flops:
        flops["total"] = sum(flops.values())
    return result


# ----------------------------------------------------------------------------
# conventional forward filter + RTS backward sweep


@dataclass
class GaussianState:
    mean: Array
    cov: Array


def _full_cov(c: Array) -> Array:
    return np.diag(c) if c.ndim == 1 else c


def _sym(P: Array) -> Array:
    return 0.5 * (P + P.T)


def _initial_state(problem: SmootherProblem, prior: GaussianState | None) -> GaussianState:
    s0 = problem.steps[0]
    if prior is not None:
        mean, cov = np.asarray(prior.mean, float), np.asarray(prior.cov, float)
        return _update(GaussianState(mean, cov), s0, 0) if s0.m else GaussianState(mean, cov)
    # flat prior: the step-0 observation alone determines the state
    if s0.m < s0.n:
        raise UnsupportedProblem("step 0 is not fully observed; pass an explicit prior")
    G, L = s0.G, _full_cov(s0.L)
    LinvG = la.solve(L, G, assume_a="pos")
    info = G.T @ LinvG
    try:
        cf = la.cho_factor(info)
    except la.LinAlgError:
        raise SingularInnovation(0) from None
    cov = la.cho_solve(cf, np.eye(s0.n))
    mean = la.cho_solve(cf, LinvG.T @ s0.o)
    return GaussianState(mean, _sym(cov))


def _update(pred: GaussianState, s, i: int) -> GaussianState:
    G, L = s.G, _full_cov(s.L)
    S = G @ pred.cov @ G.T + L
    try:
        cf = la.cho_factor(_sym(S))
    except la.LinAlgError:
        raise SingularInnovation(i) from None
    gain = la.cho_solve(cf, G @ pred.cov).T
    mean = pred.mean + gain @ (s.o - G @ pred.mean)
    # Joseph form keeps the covariance symmetric positive semidefinite
    IKG = np.eye(pred.cov.shape[0]) - gain @ G
    cov = IKG @ pred.cov @ IKG.T + gain @ L @ gain.T
    return GaussianState(mean, _sym(cov))


def rts_smooth(problem: SmootherProblem, prior: GaussianState | None = None) -> SmoothResult:
    """Kalman filter followed by a Rauch-Tung-Striebel backward pass.

    Requires square invertible ``H_i``. Without ``prior`` the first step must
    be observed with a full-column-rank ``G_0``; it then starts from the
    estimate that observation alone provides. Covariances are always computed.
    """
    errors = validate(problem)
    if errors:
        raise ContractError("invalid problem: " + "; ".join(errors))
    for i, s in enumerate(problem.steps[1:], start=1):
        if s.H.shape[0] != s.H.shape[1]:
            raise UnsupportedProblem(f"step {i}: rectangular H is not supported by the RTS smoother")

    timings: dict[str, float] = {}
    flops: dict[str, int] = {}
    start = time.perf_counter_ns()
    with timed_phase("solve", timings, flops):
        filtered = [_initial_state(problem, prior)]
        predicted: list[GaussianState | None] = [None]
        transitions: list[Array | None] = [None]
        for i, s in enumerate(problem.steps[1:], start=1):
            A = la.solve(s.H, s.F)
            a = la.solve(s.H, s.c) if s.c is not None else np.zeros(s.n)
            Hinv = la.inv(s.H)
            Qn = Hinv @ _full_cov(s.K) @ Hinv.T
            prev = filtered[-1]
            pred = GaussianState(A @ prev.mean + a, _sym(A @ prev.cov @ A.T + Qn))
            predicted.append(pred)
            transitions.append(A)
            filtered.append(_update(pred, s, i) if s.m else pred)

        means = [None] * len(filtered)
        covs = [None] * len(filtered)
        means[-1], covs[-1] = filtered[-1].mean, filtered[-1].cov
        for i in range(len(filtered) - 2, -1, -1):
            f, pred, A = filtered[i], predicted[i + 1], transitions[i + 1]
            try:
                cf = la.cho_factor(pred.cov)
            except la.LinAlgError:
                raise SingularInnovation(i + 1) from None
            gain = la.cho_solve(cf, A @ f.cov).T
            means[i] = f.mean + gain @ (means[i + 1] - pred.mean)
            covs[i] = _sym(f.cov + gain @ (covs[i + 1] - pred.cov) @ gain.T)
    timings["total"] = (time.perf_counter_ns() - start) * 1e-9
    return SmoothResult(estimates=means, covariances=covs, timings=timings)


# ----------------------------------------------------------------------------
# dense oracle


def dense_system(problem: SmootherProblem) -> tuple[Array, Array, Array]:
    """Materialize ``A``, ``b`` and the block-diagonal ``cov(e)`` densely."""
    dims = problem.dims
    offsets = np.concatenate(([0], np.cumsum(dims)))
    rows, rhs, covs = [], [], []
    total = int(offsets[-1])
    for i, s in enumerate(problem.steps):
        if i > 0:
            blk = np.zeros((s.ell, total))
            blk[:, offsets[i - 1]:offsets[i]] = -s.F
            blk[:, offsets[i]:offsets[i + 1]] = s.H
            rows.append(blk)
            rhs.append(s.c if s.c is not None else np.zeros(s.ell))
            covs.append(_full_cov(s.K))
        if s.m:
            blk = np.zeros((s.m, total))
            blk[:, offsets[i]:offsets[i + 1]] = s.G
            rows.append(blk)
            rhs.append(s.o)
            covs.append(_full_cov(s.L))
    A = np.vstack(rows) if rows else np.zeros((0, total))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    return A, b, la.block_diag(*covs) if covs else np.zeros((0, 0))


def dense_oracle(problem: SmootherProblem) -> tuple[list[Array], list[Array]]:
    """Brute-force estimates and covariance diagonal blocks.

    Whitens with ``U`` from a Cholesky factor of the dense inverse noise
    covariance, solves by dense QR and inverts the dense Gram matrix.
    """
    errors = validate(problem)
    if errors:
        raise ContractError("invalid problem: " + "; ".join(errors))
    A, b, sigma = dense_system(problem)
    if A.shape[0] < A.shape[1]:
        raise RankDeficient(0, "fewer equations than unknowns")
    U = la.cholesky(la.inv(sigma), lower=False)
    UA, Ub = U @ A, U @ b
    Q, R = np.linalg.qr(UA)
    d = np.abs(np.diagonal(R))
    offsets = np.concatenate(([0], np.cumsum(problem.dims)))
    if d.size and d.min() <= 1e-12 * max(np.linalg.norm(UA, axis=1).max(), 1e-300):
        column = int(np.searchsorted(offsets, np.argmin(d), side="right")) - 1
        raise RankDeficient(column, "dense oracle")
    u = la.solve_triangular(R, Q.T @ Ub)
    cov = np.linalg.inv(UA.T @ UA)
    est = [u[offsets[i]:offsets[i + 1]] for i in range(len(problem.steps))]
    blocks = [_sym(cov[offsets[i]:offsets[i + 1], offsets[i]:offsets[i + 1]]) for i in range(len(problem.steps))]
    return est, blocks
