import math

import numpy as np
import pytest

from oddeven_kalman import (
    ContractError,
    FactorBlocks,
    MissingBlock,
    SelInvBlocks,
    assemble,
    dense_oracle,
    factorize,
    oddeven_permutation,
    selinv_oddeven,
    selinv_sequential,
)
from oddeven_kalman.baselines import paige_saunders_factorize
from oddeven_kalman.bench.generate import generate_problem

from instances import dense_factor, max_block_rel_err, random_problem, scalar_chain


def bidiagonal(diag, upper):
    fb = FactorBlocks.empty(len(diag))
    for j, R in enumerate(diag):
        fb.rdiag[j] = np.atleast_2d(R)
        if j + 1 < len(diag):
            fb.offdiag[j] = [(j + 1, np.atleast_2d(upper[j]))]
    fb.levels = [[j] for j in range(len(diag))]
    return fb


def random_bidiagonal(rng, k, n):
    diag = [np.triu(rng.standard_normal((n, n))) for _ in range(k + 1)]
    for R in diag:
        R[np.diag_indices(n)] = np.abs(R.diagonal()) + 1.5
    # modest couplings keep the dense inverse used as the oracle well conditioned
    return bidiagonal(diag, [0.5 * rng.standard_normal((n, n)) for _ in range(k)])


class TestSequential:
    def test_identity(self):
        sel = selinv_sequential(bidiagonal([np.eye(3)], []))
        np.testing.assert_array_equal(sel.diag[0], np.eye(3))

    def test_scalar(self):
        fb = bidiagonal([[[math.sqrt(2)]], [[math.sqrt(1.5)]]], [[[-1 / math.sqrt(2)]]])
        sel = selinv_sequential(fb)
        assert sel.diag[1][0, 0] == pytest.approx(2 / 3, abs=1e-15)
        assert sel.block(0, 1)[0, 0] == pytest.approx(1 / 3, abs=1e-15)
        assert sel.diag[0][0, 0] == pytest.approx(2 / 3, abs=1e-15)

    @pytest.mark.parametrize("seed", range(15))
    def test_dense_inverse(self, seed):
        rng = np.random.default_rng(seed)
        k, n = int(rng.integers(0, 21)), int(rng.integers(1, 5))
        fb = random_bidiagonal(rng, k, n)
        R = dense_factor(fb, [n] * (k + 1))
        S = np.linalg.inv(R.T @ R)
        sel = selinv_sequential(fb)
        for j in range(k + 1):
            blk = S[j * n:(j + 1) * n, j * n:(j + 1) * n]
            assert np.linalg.norm(sel.diag[j] - blk) <= 1e-9 * np.linalg.norm(blk)
            if j < k:
                off = S[j * n:(j + 1) * n, (j + 1) * n:(j + 2) * n]
                assert np.linalg.norm(sel.block(j, j + 1) - off) <= 1e-9 * np.linalg.norm(S)
                np.testing.assert_array_equal(sel.block(j + 1, j), sel.block(j, j + 1).T)

    def test_rejects_non_bidiagonal(self):
        fb = factorize(assemble(generate_problem(6, 2, 0)))
        with pytest.raises(ContractError):
            selinv_sequential(fb)


class TestOddEven:
    def test_single_column(self):
        R = np.array([[2.0, 1.0], [0.0, 0.5]])
        fb = FactorBlocks.empty(1)
        fb.rdiag[0] = R
        fb.levels = [[0]]
        sel = selinv_oddeven(fb, oddeven_permutation(0))
        np.testing.assert_allclose(sel.diag[0], np.linalg.inv(R.T @ R), rtol=1e-14)

    def test_scalar_chain(self):
        fb = factorize(assemble(scalar_chain()))
        sel = selinv_oddeven(fb, oddeven_permutation(1))
        assert sel.diag[0][0, 0] == pytest.approx(2 / 3, abs=1e-14)
        assert sel.diag[1][0, 0] == pytest.approx(2 / 3, abs=1e-14)
        assert sel.block(0, 1)[0, 0] == pytest.approx(1 / 3, abs=1e-14)

    @pytest.mark.parametrize("seed", range(30))
    def test_oracle(self, seed):
        p = random_problem(seed + 900)
        _, ref = dense_oracle(p)
        fb = factorize(assemble(p))
        sel = selinv_oddeven(fb, oddeven_permutation(p.k))
        assert max_block_rel_err(sel.diag, ref) <= 1e-8
        for S in sel.diag:
            np.testing.assert_array_equal(S, S.T)
            assert np.linalg.eigvalsh(S).min() > 0

    @pytest.mark.parametrize("seed", range(15))
    def test_selected_blocks_match_dense_inverse(self, seed):
        p = random_problem(seed + 1300)
        fb = factorize(assemble(p))
        R = dense_factor(fb, p.dims)
        S = np.linalg.inv(R.T @ R)
        off = np.concatenate(([0], np.cumsum(p.dims))).astype(int)
        sel = selinv_oddeven(fb, oddeven_permutation(p.k))
        for (j, i), blk in sel.off.items():
            ref = S[off[j]:off[j + 1], off[i]:off[i + 1]]
            assert np.linalg.norm(blk - ref) <= 1e-8 * np.linalg.norm(S)

    @pytest.mark.parametrize("seed", range(15))
    def test_agrees_with_sequential(self, seed):
        p = random_problem(seed + 1700)
        steps = assemble(p)
        a = selinv_oddeven(factorize(steps), oddeven_permutation(p.k))
        b = selinv_sequential(paige_saunders_factorize(steps))
        assert max_block_rel_err(a.diag, b.diag) <= 1e-9

    @pytest.mark.parametrize("k", range(1, 65))
    def test_pattern_closure(self, k):
        fb = factorize(assemble(generate_problem(k, 1, k)))
        stored = {frozenset((j, i)) for j, row in enumerate(fb.offdiag) for i, _ in row}
        for row in fb.offdiag:
            idx = [i for i, _ in row]
            if len(idx) == 2:
                assert frozenset(idx) in stored

    def test_permutation_mismatch(self):
        fb = factorize(assemble(generate_problem(4, 1, 0)))
        with pytest.raises(ContractError):
            selinv_oddeven(fb, oddeven_permutation(5))


class TestStorage:
    def test_missing_block(self):
        sel = SelInvBlocks(diag=[np.eye(1), None])
        with pytest.raises(MissingBlock):
            sel.block(0, 1)
        with pytest.raises(MissingBlock):
            sel.block(1, 1)

    def test_missing_coupling_surfaces_during_inversion(self):
        # a row coupling to two columns whose mutual block was never stored
        fb = FactorBlocks.empty(3)
        fb.rdiag = [np.eye(1)] * 3
        fb.offdiag[0] = [(1, np.ones((1, 1))), (2, np.ones((1, 1)))]
        fb.levels = [[0], [1, 2]]
        perm = type(oddeven_permutation(0))(order=(0, 1, 2), level_of=(0, 1, 1), levels=((0,), (1, 2)))
        with pytest.raises(MissingBlock):
            selinv_oddeven(fb, perm)

    def test_gather_transposes(self):
        a = np.array([[1.0, 2.0]])
        sel = SelInvBlocks(diag=[np.eye(1), np.eye(2)], off={(0, 1): a})
        G = sel.gather([0, 1])
        np.testing.assert_array_equal(G[1:, :1], a.T)
        np.testing.assert_array_equal(G, G.T)
