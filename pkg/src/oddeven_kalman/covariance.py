"""Selected inversion of ``S = (R^T R)^{-1}`` on the block pattern of ``R``.

Only the blocks of ``S`` at nonzero block positions of ``R`` (and their
transposes) are computed. The diagonal blocks are the covariances of the
smoothed states. Columns are processed in reverse elimination order: when
row ``j`` is processed, every column it couples to has already been done.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError, MissingBlock
from .factor import FactorBlocks

Array = np.ndarray


@dataclass
class SelInvBlocks:
    """Selected blocks of ``S`` keyed by original column indices.

    ``off[(j, i)]`` is stored in one orientation only, with ``j`` eliminated
    before ``i``; :meth:`block` transposes on read.
    """

    diag: list[Array | None]
    off: dict[tuple[int, int], Array] = field(default_factory=dict)

    def block(self, a: int, b: int) -> Array:
        if a == b:
            d = self.diag[a]
            if d is None:
                raise MissingBlock(a, b)
            return d
        blk = self.off.get((a, b))
        if blk is not None:
            return blk
        blk = self.off.get((b, a))
        if blk is not None:
            return blk.T
        raise MissingBlock(a, b)

    def gather(self, idx: list[int]) -> Array:
        """Assemble the symmetric submatrix ``S[idx, idx]``."""
        if len(idx) == 1:
            return self.block(idx[0], idx[0])
        rows = [np.concatenate([self.block(a, b) for b in idx], axis=1) for a in idx]
        return np.concatenate(rows)


def _symmetrize(S: Array) -> Array:
    return 0.5 * (S + S.T)


def _process_row(factor: FactorBlocks, sel: SelInvBlocks, j: int) -> None:
    Rjj = factor.rdiag[j]
    n = Rjj.shape[0]
    # R_jj^{-1} R_jj^{-T}
    inv_t = kernels.trsm_upper(Rjj, np.eye(n), trans=True, position=j)
    base = kernels.trsm_upper(Rjj, inv_t, check=False)
    row = factor.offdiag[j]
    if not row:
        sel.diag[j] = _symmetrize(base)
        return
    idx = [i for i, _ in row]
    RjI = row[0][1] if len(row) == 1 else np.concatenate([blk for _, blk in row], axis=1)
    W = kernels.trsm_upper(Rjj, RjI, check=False)
    SjI = kernels.gemm(W, sel.gather(idx), alpha=-1.0)
    Sjj = kernels.gemm(SjI, W, alpha=-1.0, beta=1.0, C=base, trans_b=True)
    sel.diag[j] = _symmetrize(Sjj)
    start = 0
    for i, blk in row:
        w = blk.shape[1]
        sel.off[(j, i)] = SjI[:, start:start + w]
        start += w


def _run_levels(factor: FactorBlocks, levels, pool) -> SelInvBlocks:
    sel = SelInvBlocks(diag=[None] * factor.count)
    for cols in reversed(levels):
        cols = list(cols)

        def body(idx, cols=cols):
            _process_row(factor, sel, cols[idx])

        if pool is None or len(cols) == 1:
            for idx in range(len(cols)):
                body(idx)
        else:
            pool.parallel_for(len(cols), body)
    return sel


def selinv_sequential(factor: FactorBlocks) -> SelInvBlocks:
    """Selected inversion for a block-bidiagonal ``R`` (columns eliminated in order)."""
    k = factor.count - 1
    for j, row in enumerate(factor.offdiag):
        expected = [] if j == k else [j + 1]
        if [i for i, _ in row] != expected:
            raise ContractError(f"block row {j} is not bidiagonal: couples to {[i for i, _ in row]}")
    return _run_levels(factor, [[j] for j in range(k + 1)], None)


def selinv_oddeven(factor: FactorBlocks, perm, pool=None) -> SelInvBlocks:
    """Selected inversion for the odd-even ``R``; levels run deepest first.

    All columns of one level are processed concurrently; each reads only
    blocks finished at deeper levels.
    """
    if [list(lvl) for lvl in perm.levels] != factor.levels:
        raise ContractError("factor was not produced with this permutation")
    return _run_levels(factor, perm.levels, pool)
