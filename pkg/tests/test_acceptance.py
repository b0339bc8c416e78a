"""Acceptance suite: one test per criterion, each printing a single verdict line.

Tolerances are fixed by the acceptance criteria and are asserted as stated.
"""

import math
import time
import warnings

import numpy as np
import pytest

from oddeven_kalman import (
    assemble,
    dense_oracle,
    factorize,
    oddeven_permutation,
    paige_saunders_smooth,
    rts_smooth,
    smooth,
)
from oddeven_kalman.bench import harness
from oddeven_kalman.bench.generate import generate_problem
from oddeven_kalman.parallel import available_cores

from instances import benchmark_class, max_block_rel_err, random_problem, rel_err, scalar_chain


def oracle_instances():
    """200 instances covering k = 1..33, uniform and varying n, square and rectangular H."""
    out = []
    for seed in range(200):
        k = 1 + seed % 33
        out.append(random_problem(seed, k=k, n_max=5, rectangular=bool(seed % 2), vary=bool((seed // 2) % 2)))
    return out


@pytest.fixture(scope="module")
def instances():
    probs = oracle_instances()
    ks = {p.k for p in probs}
    assert ks == set(range(1, 34))
    assert any(p.steps[1].ell == p.steps[1].n + 1 for p in probs)
    assert any(len(set(p.dims)) > 1 for p in probs)
    return probs, [dense_oracle(p) for p in probs]


def test_c01_oracle_estimates(instances, verdict):
    probs, refs = instances
    start = time.perf_counter()
    worst_oe = worst_ps = 0.0
    for p, (est, _) in zip(probs, refs):
        worst_oe = max(worst_oe, rel_err(smooth(p, covariance=False).estimates, est))
        worst_ps = max(worst_ps, rel_err(paige_saunders_smooth(p, covariance=False).estimates, est))
    elapsed = time.perf_counter() - start
    ok = worst_oe <= 1e-10 and worst_ps <= 1e-10 and elapsed <= 60
    verdict(1, "oracle equivalence (estimates)", ok,
            f"max rel err odd-even {worst_oe:.2e}, Paige-Saunders {worst_ps:.2e} (tol 1e-10), {elapsed:.1f}s (limit 60s)")
    assert ok


def test_c02_oracle_covariances(instances, verdict):
    probs, refs = instances
    start = time.perf_counter()
    worst_oe = worst_ps = 0.0
    spd = True
    for p, (_, cov) in zip(probs, refs):
        a = smooth(p).covariances
        b = paige_saunders_smooth(p).covariances
        worst_oe = max(worst_oe, max_block_rel_err(a, cov))
        worst_ps = max(worst_ps, max_block_rel_err(b, cov))
        for S in a + b:
            spd &= bool(np.array_equal(S, S.T) and np.linalg.eigvalsh(S).min() > 0)
    elapsed = time.perf_counter() - start
    ok = worst_oe <= 1e-8 and worst_ps <= 1e-8 and spd and elapsed <= 60
    verdict(2, "oracle equivalence (covariances)", ok,
            f"max rel err odd-even SelInv {worst_oe:.2e}, sequential SelInv {worst_ps:.2e} (tol 1e-8), "
            f"all symmetric PD: {spd}, {elapsed:.1f}s (limit 60s)")
    assert ok


def test_c03_closed_form(verdict):
    p = scalar_chain((0.0, 3.0))
    errs = []
    for r in (smooth(p), paige_saunders_smooth(p)):
        errs.append(np.abs(np.concatenate(r.estimates) - [1.0, 2.0]).max())
        errs.append(np.abs(np.array([c[0, 0] for c in r.covariances]) - 2 / 3).max())
        errs.append(abs(r.cross[(0, 1)][0, 0] - 1 / 3))
    worst = max(errs)
    ok = worst <= 1e-14
    verdict(3, "closed-form scalar chain", ok, f"u=(1,2), cov=(2/3,2/3), cross 1/3; max abs err {worst:.1e} (tol 1e-14)")
    assert ok


def _fingerprint(result):
    parts = [u.tobytes() for u in result.estimates]
    parts += [c.tobytes() for c in result.covariances]
    parts += [key.__repr__().encode() + blk.tobytes() for key, blk in sorted(result.cross.items())]
    return b"".join(parts)


def test_c04_determinism(verdict):
    p = generate_problem(10_000, 6, 2024)
    ref = None
    mismatches = []
    for cores in (1, 2, 4, 8):
        for chunk in (1, 10, 100):
            fp = _fingerprint(smooth(p, threads=cores, chunk=chunk))
            if ref is None:
                ref = fp
            elif fp != ref:
                mismatches.append((cores, chunk))
    ok = not mismatches
    verdict(4, "bitwise determinism across cores and chunk sizes", ok,
            "12 configurations identical" if ok else f"differs for {mismatches}")
    assert ok


def test_c05_work_overhead(verdict):
    ratios = {}
    for k, n in ((10_000, 6), (1_000, 48)):
        p = generate_problem(k, n, 7)
        oe = harness.count_run_flops("oddeven", p)["total"]
        ps = harness.count_run_flops("paige-saunders", p)["total"]
        ratios[(k, n)] = oe / ps
    ok = all(1.2 <= r <= 4.0 for r in ratios.values())
    detail = ", ".join(f"(k={k}, n={n}) {r:.2f}x" for (k, n), r in ratios.items())
    verdict(5, "flop overhead odd-even / Paige-Saunders in [1.2, 4.0]", ok, detail)
    assert ok


def test_c06_scaling_smoke(verdict):
    cores = available_cores()
    if cores < 8:
        msg = f"host exposes {cores} core(s); the 8-core speedup check needs >= 8, not measured"
        warnings.warn(msg)
        verdict(6, "scaling smoke (soft)", False, msg, soft=True)
        return
    p = generate_problem(100_000, 6, 11)
    t1 = min(smooth(p, threads=1).timings["total"] for _ in range(2))
    t8 = min(smooth(p, threads=8).timings["total"] for _ in range(2))
    tps = min(paige_saunders_smooth(p).timings["total"] for _ in range(2))
    speedup = t1 / t8
    ok = speedup >= 2.5 and t8 < tps
    detail = f"8-core speedup {speedup:.2f}x (target 2.5x), 8-core {t8:.2f}s vs Paige-Saunders {tps:.2f}s"
    if not ok:
        warnings.warn(detail)
    verdict(6, "scaling smoke (soft)", ok, detail, soft=True)


def test_c07_recursion_depth(verdict):
    measured = {}
    for steps in (2, 3, 4, 8, 50, 1000):
        fb = factorize(assemble(generate_problem(steps - 1, 1, steps)))
        measured[steps] = len(fb.levels)
    ok = all(math.ceil(math.log2(s)) <= d <= math.ceil(math.log2(s)) + 1 for s, d in measured.items())
    detail = ", ".join(f"k+1={s}: {d} (ceil log2 {math.ceil(math.log2(s))})" for s, d in measured.items())
    verdict(7, "recursion depth within ceil(log2(k+1)) + 1", ok, detail)
    assert ok


def symbolic_pattern(k, order):
    """Row-merge symbolic QR of the chain's row structure in a given column order.

    Rows start as ``{i}`` (observation) and ``{i-1, i}`` (evolution). Eliminating
    a column merges every active row touching it; the merged set is that
    column's row of R and, minus the column, survives as a new active row.
    """
    rows = [{i} for i in range(k + 1)] + [{i - 1, i} for i in range(1, k + 1)]
    pattern = {}
    for col in order:
        touching = [r for r in rows if col in r]
        rows = [r for r in rows if col not in r]
        merged = set().union(*touching)
        pattern[col] = merged - {col}
        if pattern[col]:
            rows.append(set(pattern[col]))
    return pattern


def test_c08_r_structure(verdict):
    k = 50
    fb = factorize(assemble(generate_problem(k, 1, 5)))
    got = {j: {i for i, _ in row} for j, row in enumerate(fb.offdiag)}
    want = symbolic_pattern(k, oddeven_permutation(k).order)
    max_off = max(len(v) for v in got.values())
    ok = got == want and max_off <= 2
    verdict(8, "odd-even R block pattern", ok,
            f"matches symbolic elimination: {got == want}, max off-diagonal blocks per row {max_off}")
    assert ok


def test_c09_rts_agreement(verdict):
    worst_est = worst_cov = 0.0
    for seed in range(50):
        p = benchmark_class(seed, n_max=4)
        assert p.k <= 33 and max(p.dims) <= 4
        est, cov = dense_oracle(p)
        r = rts_smooth(p)
        worst_est = max(worst_est, rel_err(r.estimates, est))
        worst_cov = max(worst_cov, max_block_rel_err(r.covariances, cov))
    ok = worst_est <= 1e-8 and worst_cov <= 1e-8
    verdict(9, "RTS agrees with the oracle", ok,
            f"50 instances, max rel err estimates {worst_est:.2e}, covariances {worst_cov:.2e} (tol 1e-8)")
    assert ok


def test_c10_microbench(verdict):
    n = 48
    res = harness.microbench(10, n, cores=1, keep=True)
    i, j = np.indices((2 * n, n))
    fill_exact = all(np.array_equal(s.A, (i + j).astype(float)) for s in res.steps)
    worst = 0.0
    for s in res.steps:
        R = np.linalg.qr(s.A, mode="r")
        R = R * np.where(np.diag(R) < 0, -1.0, 1.0)[:, None]
        worst = max(worst, float(np.linalg.norm(s.R - R) / np.linalg.norm(R)))
    ok = fill_exact and worst <= 1e-12 and len(res.steps) == 10
    verdict(10, "micro-benchmark fill and QR", ok,
            f"A_ij = i+j exact: {fill_exact}; max rel diff of R vs direct QR {worst:.1e} (tol 1e-12)")
    assert ok
