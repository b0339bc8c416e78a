"""Dense block kernels used by every smoother.

All blocks are C-ordered float64 ``numpy`` arrays. Kernels are single-threaded
and reentrant; parallelism lives one level up.

Two interchangeable backends implement the same contract:

``"lapack"`` (default)
    Householder QR and reflector application through the LAPACK routines
    ``dgeqrf``/``dormqr``, triangular solves through ``dtrtrs``.
``"reference"``
    A self-contained numpy implementation of the same Householder scheme.

Both produce the same compact reflector layout, so a factor computed by one
backend can be applied by the other. Every ``R`` returned by :func:`qr2` has a
nonnegative diagonal.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from functools import lru_cache
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import ContractError, SingularBlock

SINGULAR_RTOL = 1e-12

_BACKENDS = ("lapack", "reference")
_backend = "lapack"


def set_backend(name: str) -> None:
    global _backend
    if name not in _BACKENDS:
        raise ContractError(f"unknown kernel backend {name!r}; choose from {_BACKENDS}")
    _backend = name


def get_backend() -> str:
    return _backend


@contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


# ----------------------------------------------------------------------------
# flop accounting


class FlopCounter:
    """Accumulates floating-point operation counts from kernel calls.

    Counts are integers, so the total does not depend on the order in which
    concurrent tasks report.
    """

    def __init__(self):
        self.total = 0
        self._lock = threading.Lock()

    def add(self, flops: int) -> None:
        with self._lock:
            self.total += flops


_active_counter: FlopCounter | None = None


@contextmanager
def count_flops(enabled: bool = True):
    """Activate a fresh :class:`FlopCounter` for the duration of the block.

    With ``enabled=False`` the yielded counter is never attached and reads 0.
    """
    global _active_counter
    counter = FlopCounter()
    previous = _active_counter
    if enabled:
        _active_counter = counter
    try:
        yield counter
    finally:
        _active_counter = previous


def _tally(flops: int) -> None:
    counter = _active_counter
    if counter is not None:
        counter.add(flops)


def qr_flops(m: int, n: int) -> int:
    """Householder QR of an m-by-n matrix: 2mn^2 - 2n^3/3 (roles swap if m < n)."""
    if m < n:
        m, n = n, m
    return int(round(2 * m * n * n - 2 * n**3 / 3))


def apply_q_flops(m: int, r: int, p: int) -> int:
    """Applying r reflectors of length m to an m-by-p block."""
    return 4 * m * r * p - 2 * r * r * p


def trsm_flops(n: int, p: int) -> int:
    return n * n * p


def gemm_flops(m: int, k: int, n: int) -> int:
    return 2 * m * k * n


def cholesky_flops(n: int) -> int:
    return int(round(n**3 / 3))


# ----------------------------------------------------------------------------
# QR of stacked block pairs


@dataclass(frozen=True)
class QFactor:
    """Compact Householder representation of an orthogonal factor.

    ``v`` holds the reflectors below the diagonal of an ``rows``-by-``rank``
    array (LAPACK ``geqrf`` layout), ``tau`` their coefficients, and ``signs``
    the row sign flips that make the diagonal of ``R`` nonnegative.
    """

    v: np.ndarray
    tau: np.ndarray
    signs: np.ndarray
    rows: int

    @property
    def rank(self) -> int:
        return self.tau.shape[0]

    @classmethod
    def identity(cls, rows: int) -> QFactor:
        return cls(np.zeros((rows, 0)), np.zeros(0), np.ones(0), rows)


def _as_block(a, cols: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1) if cols is None else a.reshape(-1, cols)
    if a.ndim != 2:
        raise ContractError(f"expected a 2-D block, got shape {a.shape}")
    return a


def _stack(top, bottom) -> np.ndarray:
    top = _as_block(top)
    if bottom is None:
        return top
    bottom = _as_block(bottom, top.shape[1])
    if top.shape[1] != bottom.shape[1]:
        raise ContractError(f"column mismatch in stacked blocks: {top.shape} vs {bottom.shape}")
    return np.concatenate((top, bottom))


@lru_cache(maxsize=256)
def _upper_mask(r: int, n: int) -> np.ndarray:
    return np.triu(np.ones((r, n)))


def _reference_geqrf(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    m, n = a.shape
    r = min(m, n)
    tau = np.zeros(r)
    for j in range(r):
        alpha = a[j, j]
        x = a[j + 1:, j]
        xnorm = math.sqrt(float(x @ x)) if x.size else 0.0
        if xnorm == 0.0:
            continue
        beta = -math.copysign(math.hypot(alpha, xnorm), alpha)
        tau[j] = (beta - alpha) / beta
        x /= alpha - beta
        a[j, j] = beta
        if j + 1 < n:
            w = a[j, j + 1:] + x @ a[j + 1:, j + 1:]
            a[j, j + 1:] -= tau[j] * w
            a[j + 1:, j + 1:] -= tau[j] * np.outer(x, w)
    return a, tau


def _reference_apply(v: np.ndarray, tau: np.ndarray, c: np.ndarray, transpose: bool) -> np.ndarray:
    c = np.array(c, dtype=np.float64, order="C", copy=True)
    r = tau.shape[0]
    steps = range(r) if transpose else range(r - 1, -1, -1)
    for j in steps:
        if tau[j] == 0.0:
            continue
        tail = v[j + 1:, j]
        w = c[j] + tail @ c[j + 1:]
        c[j] -= tau[j] * w
        c[j + 1:] -= tau[j] * np.outer(tail, w)
    return c


def _lapack_apply(v: np.ndarray, tau: np.ndarray, c: np.ndarray, transpose: bool) -> np.ndarray:
    lwork = max(1, c.shape[1]) * 32
    out, _, info = lapack.dormqr(b"L", b"T" if transpose else b"N", v, tau, c, lwork)
    if info != 0:
        raise ContractError(f"dormqr failed with info={info}")
    return np.ascontiguousarray(out)


def qr2(top, bottom=None) -> tuple[np.ndarray, QFactor]:
    """QR factorization of the stacked pair ``[top; bottom]``.

    Returns ``(R, Q)`` with ``[top; bottom] = Q [R; 0]``. ``R`` is ``cols``-by-
    ``cols`` when there are at least as many rows as columns, otherwise it is
    trapezoidal with one row per stacked row. Rank deficiency is not detected
    here; it shows up as a (near-)zero diagonal entry of ``R``.
    """
    a = _stack(top, bottom)
    m, n = a.shape
    r = min(m, n)
    if r == 0:
        return np.zeros((0, n)), QFactor.identity(m)
    _tally(qr_flops(m, n))
    if _backend == "lapack":
        packed, tau, _, info = lapack.dgeqrf(a)
        if info != 0:
            raise ContractError(f"dgeqrf failed with info={info}")
    else:
        packed, tau = _reference_geqrf(a)
    R = packed[:r] * _upper_mask(r, n)
    signs = np.where(R.diagonal() < 0.0, -1.0, 1.0)
    R *= signs[:, None]
    v = np.asfortranarray(packed[:, :r]) if _backend == "lapack" else packed[:, :r]
    return np.ascontiguousarray(R), QFactor(v, tau, signs, m)


def apply_qt(Q: QFactor, top, bottom=None) -> tuple[np.ndarray, np.ndarray]:
    """Compute ``Q^T [top; bottom]``.

    The result is split at the rank of ``Q``: the head lines up with the rows
    of the ``R`` produced alongside ``Q`` and the tail with its zero rows.
    Vectors are accepted and treated as single-column blocks.
    """
    c = _stack(top, bottom)
    if c.shape[0] != Q.rows:
        raise ContractError(f"Q acts on {Q.rows} rows, got a block with {c.shape[0]}")
    r = Q.rank
    if r == 0 or c.shape[1] == 0:
        out = np.array(c, copy=True)
    else:
        _tally(apply_q_flops(Q.rows, r, c.shape[1]))
        if _backend == "lapack":
            out = _lapack_apply(Q.v, Q.tau, c, transpose=True)
        else:
            out = _reference_apply(Q.v, Q.tau, c, transpose=True)
        out[:r] *= Q.signs[:, None]
    return out[:r], out[r:]


def apply_q(Q: QFactor, c) -> np.ndarray:
    """Compute ``Q c`` (the inverse of :func:`apply_qt`) for a full-height block."""
    c = np.array(_as_block(c), copy=True)
    if c.shape[0] != Q.rows:
        raise ContractError(f"Q acts on {Q.rows} rows, got a block with {c.shape[0]}")
    r = Q.rank
    if r == 0 or c.shape[1] == 0:
        return c
    _tally(apply_q_flops(Q.rows, r, c.shape[1]))
    c[:r] *= Q.signs[:, None]
    if _backend == "lapack":
        return _lapack_apply(Q.v, Q.tau, c, transpose=False)
    return _reference_apply(Q.v, Q.tau, c, transpose=False)


# ----------------------------------------------------------------------------
# triangular solves, products, SPD factorization


def _check_triangular(T: np.ndarray, position) -> None:
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ContractError(f"triangular factor must be square, got {T.shape}")
    if T.shape[0] == 0:
        return
    diag = np.abs(T.diagonal())
    if diag.min() <= SINGULAR_RTOL * np.abs(T).max():
        raise SingularBlock(position, f"min |diag| = {diag.min():.3e}")


def _reference_trsv(T: np.ndarray, b: np.ndarray, lower: bool) -> np.ndarray:
    n = T.shape[0]
    x = np.array(b, dtype=np.float64, copy=True)
    rows = range(n) if lower else range(n - 1, -1, -1)
    for i in rows:
        if lower:
            acc = T[i, :i] @ x[:i]
        else:
            acc = T[i, i + 1:] @ x[i + 1:]
        x[i] = (x[i] - acc) / T[i, i]
    return x


def _solve_left(T: np.ndarray, B: np.ndarray, lower: bool, trans: bool) -> np.ndarray:
    if _backend == "lapack":
        out, info = lapack.dtrtrs(T, B, lower=int(lower), trans=int(trans))
        if info != 0:
            raise SingularBlock(None, f"dtrtrs info={info}")
        return np.ascontiguousarray(out)
    if trans:
        return _reference_trsv(T.T, B, not lower)
    return _reference_trsv(T, B, lower)


def trsm(T, B, *, lower: bool = False, trans: bool = False, side: str = "left", position=None,
         check: bool = True):
    """Triangular solve with a block right-hand side.

    ``side="left"`` returns ``op(T)^{-1} B``; ``side="right"`` returns
    ``B op(T)^{-1}``, where ``op(T)`` is ``T^T`` if ``trans`` else ``T``.
    Raises :class:`SingularBlock` when a diagonal entry of ``T`` is below
    ``SINGULAR_RTOL * max|T|``; ``check=False`` skips that test for callers
    that have already validated ``T``.
    """
    T = np.asarray(T, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if check:
        _check_triangular(T, position)
    elif T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ContractError(f"triangular factor must be square, got {T.shape}")
    vector = B.ndim == 1
    if vector:
        B = B.reshape(-1, 1)
    n = T.shape[0]
    if side == "left":
        if B.shape[0] != n:
            raise ContractError(f"cannot solve {T.shape} against {B.shape}")
        _tally(trsm_flops(n, B.shape[1]))
        out = _solve_left(T, B, lower, trans) if B.size else B.copy()
    elif side == "right":
        if vector or B.shape[1] != n:
            raise ContractError(f"cannot right-solve {B.shape} against {T.shape}")
        _tally(trsm_flops(n, B.shape[0]))
        # B op(T)^{-1} = (op(T)^{-T} B^T)^T
        out = _solve_left(T, np.ascontiguousarray(B.T), lower, not trans).T if B.size else B.copy()
        out = np.ascontiguousarray(out)
    else:
        raise ContractError(f"side must be 'left' or 'right', got {side!r}")
    return out.ravel() if vector else out


def trsm_upper(R, B, *, trans: bool = False, side: str = "left", position=None, check: bool = True):
    """Solve with an upper-triangular ``R``; see :func:`trsm`."""
    return trsm(R, B, lower=False, trans=trans, side=side, position=position, check=check)


def gemm(A, B, alpha: float = 1.0, beta: float = 0.0, C=None, *,
         trans_a: bool = False, trans_b: bool = False) -> np.ndarray:
    """Return ``alpha op(A) op(B) + beta C``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if trans_a:
        A = A.T
    if trans_b:
        B = B.T
    if A.shape[-1] != B.shape[0]:
        raise ContractError(f"gemm shape mismatch: {A.shape} x {B.shape}")
    _tally(gemm_flops(A.shape[0], A.shape[-1], B.shape[-1] if B.ndim == 2 else 1))
    out = A @ B
    if alpha != 1.0:
        out = alpha * out
    if C is not None and beta != 0.0:
        C = np.asarray(C, dtype=np.float64)
        if C.shape != out.shape:
            raise ContractError(f"gemm accumulator shape {C.shape} != {out.shape}")
        out = out + beta * C
    return out


def cholesky_lower(S) -> np.ndarray:
    """Lower-triangular ``Lambda`` with ``S = Lambda Lambda^T``.

    Raises ``numpy.linalg.LinAlgError`` if ``S`` is not positive definite.
    """
    S = np.asarray(S, dtype=np.float64)
    _tally(cholesky_flops(S.shape[0]))
    if _backend == "lapack":
        out, info = lapack.dpotrf(S, lower=1, clean=1)
        if info != 0:
            raise np.linalg.LinAlgError(f"dpotrf info={info}")
        return np.ascontiguousarray(out)
    return np.linalg.cholesky(S)
