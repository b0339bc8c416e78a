"""Benchmark harness: timed runs, sweeps, the four-phase micro-benchmark, verification."""

from __future__ import annotations

import csv
import hashlib
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .. import kernels
from ..baselines import dense_oracle, paige_saunders_smooth, rts_smooth
from ..errors import KalmanError, UnsupportedProblem
from ..model import SmoothResult, SmootherProblem
from ..oddeven import smooth
from ..parallel import DEFAULT_CHUNK, ForkJoinPool
from .generate import generate_problem

ALGORITHMS = ("oddeven", "oddeven-nc", "paige-saunders", "paige-saunders-nc", "rts", "oracle")

PHASES = {
    "oddeven": ("assemble", "factorize", "solve", "covariance", "total"),
    "oddeven-nc": ("assemble", "factorize", "solve", "total"),
    "paige-saunders": ("assemble", "factorize", "solve", "covariance", "total"),
    "paige-saunders-nc": ("assemble", "factorize", "solve", "total"),
    "rts": ("solve", "total"),
    "oracle": ("total",),
}

MICRO_PHASES = ("alloc-steps", "alloc-matrices", "fill", "qr", "total")
MICRO_CHUNK = 8

CSV_HEADER = ("algorithm", "k", "n", "cores", "chunk", "rep", "phase", "seconds", "flops", "error")


@dataclass
class BenchConfig:
    algorithm: str = "oddeven"
    k: int = 1000
    n: int = 6
    cores: int = 1
    chunk: int = DEFAULT_CHUNK
    reps: int = 5
    seed: int = 42
    out: str | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        for name in ("k", "n", "cores", "chunk", "reps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class BenchRecord:
    algorithm: str
    k: int
    n: int
    cores: int
    chunk: int
    rep: int
    phase: str
    seconds: float
    flops: int | None = None
    error: str = ""

    def row(self) -> list:
        return [getattr(self, f.name) if getattr(self, f.name) is not None else "" for f in fields(self)]


@dataclass
class BenchSummary:
    algorithm: str
    k: int
    n: int
    cores: int
    chunk: int
    medians: dict[str, float] = field(default_factory=dict)
    flops: int | None = None
    flop_overhead: float | None = None
    speedup: float | None = None
    time_overhead: float | None = None
    checksum: str | None = None
    failed_reps: int = 0


@dataclass
class BenchReport:
    records: list[BenchRecord]
    summary: BenchSummary


def write_csv(records, out) -> None:
    """Write records with the fixed header to a path, a file object, or stdout ('-')."""
    if out is None or out == "-":
        _write(records, sys.stdout)
        return
    if hasattr(out, "write"):
        _write(records, out)
        return
    with open(out, "w", newline="") as fh:
        _write(records, fh)


def _write(records, fh) -> None:
    w = csv.writer(fh)
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())


def estimate_checksum(result: SmoothResult) -> str:
    h = hashlib.sha256()
    for u in result.estimates:
        h.update(np.ascontiguousarray(u).tobytes())
    for c in result.covariances or ():
        h.update(np.ascontiguousarray(c).tobytes())
    return h.hexdigest()[:16]


def run_algorithm(algorithm: str, problem: SmootherProblem, cores: int = 1, chunk: int = DEFAULT_CHUNK) -> SmoothResult:
    if algorithm in ("oddeven", "oddeven-nc"):
        return smooth(problem, covariance=algorithm == "oddeven", threads=cores, chunk=chunk)
    if algorithm in ("paige-saunders", "paige-saunders-nc"):
        return paige_saunders_smooth(problem, covariance=algorithm == "paige-saunders")
    if algorithm == "rts":
        return rts_smooth(problem)
    if algorithm == "oracle":
        start = time.perf_counter_ns()
        est, covs = dense_oracle(problem)
        return SmoothResult(est, covs, timings={"total": (time.perf_counter_ns() - start) * 1e-9})
    raise ValueError(f"unknown algorithm {algorithm!r}")


def count_run_flops(algorithm: str, problem: SmootherProblem) -> dict[str, int]:
    """Per-phase flop counts from one untimed single-threaded run.

    Counts are identical across thread counts and chunk sizes, so one run
    serves every timed repetition. Solvers that bypass the kernels report {}.
    """
    if algorithm in ("rts", "oracle"):
        return {}
    with kernels.count_flops():
        result = run_algorithm(algorithm, problem, cores=1)
    return result.flops


def run_benchmark(config: BenchConfig, problem: SmootherProblem | None = None, count_flops: bool = True) -> BenchReport:
    """Time ``config.reps`` runs; problem construction is outside the timed region.

    A failing repetition is recorded with its error message and does not stop
    the run.
    """
    if problem is None:
        problem = generate_problem(config.k, config.n, config.seed)
    phases = PHASES[config.algorithm]
    flops = count_run_flops(config.algorithm, problem) if count_flops else {}
    base = dict(algorithm=config.algorithm, k=problem.k, n=problem.steps[0].n, cores=config.cores, chunk=config.chunk)
    records: list[BenchRecord] = []
    samples: dict[str, list[float]] = {p: [] for p in phases}
    checksum = None
    failed = 0
    for rep in range(config.reps):
        start = time.perf_counter_ns()
        try:
            result = run_algorithm(config.algorithm, problem, config.cores, config.chunk)
        except (KalmanError, ValueError, np.linalg.LinAlgError) as err:
            elapsed = (time.perf_counter_ns() - start) * 1e-9
            phase = getattr(err, "phase", None) or "total"
            records.append(BenchRecord(**base, rep=rep, phase=phase, seconds=elapsed,
                                       error=f"{type(err).__name__}: {err}"))
            failed += 1
            continue
        for phase in phases:
            sec = result.timings[phase]
            samples[phase].append(sec)
            records.append(BenchRecord(**base, rep=rep, phase=phase, seconds=sec, flops=flops.get(phase)))
        checksum = estimate_checksum(result)
    summary = BenchSummary(**base, failed_reps=failed, checksum=checksum)
    summary.medians = {p: statistics.median(v) for p, v in samples.items() if v}
    summary.flops = flops.get("total")
    if summary.flops:
        reference = "paige-saunders" if config.algorithm != "oddeven-nc" else "paige-saunders-nc"
        if config.algorithm.startswith("paige-saunders"):
            summary.flop_overhead = 1.0
        else:
            summary.flop_overhead = summary.flops / count_run_flops(reference, problem)["total"]
    if config.out:
        write_csv(records, config.out)
    return BenchReport(records, summary)


def sweep(template: BenchConfig, cores_list, chunk_list, baseline: bool = True,
          problem: SmootherProblem | None = None) -> tuple[list[BenchRecord], list[BenchSummary]]:
    """Cross product of core counts and chunk sizes for one algorithm.

    Speedups are relative to the same algorithm on 1 core (run once if 1 is
    not in ``cores_list``). With ``baseline`` the sequential Paige-Saunders
    smoother is timed as well and ``time_overhead`` is the 1-core median of
    the swept algorithm over the Paige-Saunders median.
    """
    if problem is None:
        problem = generate_problem(template.k, template.n, template.seed)
    records: list[BenchRecord] = []
    summaries: list[BenchSummary] = []

    def run(cores, chunk, algorithm=template.algorithm):
        cfg = BenchConfig(algorithm=algorithm, k=template.k, n=template.n, cores=cores, chunk=chunk,
                          reps=template.reps, seed=template.seed)
        rep = run_benchmark(cfg, problem)
        records.extend(rep.records)
        return rep.summary

    one_core = None
    if 1 not in cores_list:
        one_core = run(1, chunk_list[0]).medians.get("total")
    ps_median = None
    if baseline and not template.algorithm.startswith("paige-saunders"):
        ps_alg = "paige-saunders-nc" if template.algorithm.endswith("-nc") else "paige-saunders"
        ps_median = run(1, template.chunk, ps_alg).medians.get("total")
    for chunk in chunk_list:
        for cores in cores_list:
            s = run(cores, chunk)
            summaries.append(s)
            if cores == 1 and one_core is None:
                one_core = s.medians.get("total")
    for s in summaries:
        total = s.medians.get("total")
        if total and one_core:
            s.speedup = 1.0 if s.cores == 1 else one_core / total
        if ps_median and one_core:
            s.time_overhead = one_core / ps_median
    if template.out:
        write_csv(records, template.out)
    return records, summaries


# ----------------------------------------------------------------------------
# micro-benchmark


class MicroStep:
    __slots__ = ("index", "A", "R")

    def __init__(self, index: int):
        self.index = index
        self.A = None
        self.R = None


@dataclass
class MicroResult:
    records: list[BenchRecord]
    steps: list[MicroStep] | None = None


def fill_matrix(A: np.ndarray) -> None:
    """Set ``A[i, j] = i + j`` (0-based)."""
    rows, cols = A.shape
    A[:] = np.arange(rows)[:, None] + np.arange(cols)[None, :]


def microbench(k: int, n: int, cores: int = 1, reps: int = 1, keep: bool = False,
               chunk: int = MICRO_CHUNK) -> MicroResult:
    """Four embarrassingly parallel phases, each timed separately.

    1. allocate ``k`` step structures, 2. give each a ``2n``-by-``n`` matrix,
    3. fill every matrix with ``A[i, j] = i + j``, 4. QR-factor every matrix.
    """
    if k < 1 or n < 1:
        raise ValueError("k and n must be >= 1")
    records: list[BenchRecord] = []
    steps: list[MicroStep | None] = []
    base = dict(algorithm="micro", k=k, n=n, cores=cores, chunk=chunk)
    with ForkJoinPool(cores, chunk) as pool:
        for rep in range(reps):
            steps = [None] * k

            def alloc_step(i):
                steps[i] = MicroStep(i)

            def alloc_matrix(i):
                steps[i].A = np.empty((2 * n, n))

            def fill(i):
                fill_matrix(steps[i].A)

            def factor(i):
                steps[i].R = kernels.qr2(steps[i].A)[0]

            total = 0.0
            for phase, body in zip(MICRO_PHASES, (alloc_step, alloc_matrix, fill, factor)):
                start = time.perf_counter_ns()
                pool.parallel_for(k, body)
                sec = (time.perf_counter_ns() - start) * 1e-9
                total += sec
                records.append(BenchRecord(**base, rep=rep, phase=phase, seconds=sec))
            records.append(BenchRecord(**base, rep=rep, phase="total", seconds=total))
    return MicroResult(records, steps if keep else None)


# ----------------------------------------------------------------------------
# verification


@dataclass
class VerifyReport:
    passed: bool
    tolerance: float
    estimate_errors: dict[str, float] = field(default_factory=dict)
    covariance_errors: dict[str, float] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)
    estimates: list[list[float]] | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def _rel(a, b) -> float:
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


def _block_rel(blocks, ref) -> float:
    return max(float(np.linalg.norm(x - y) / max(np.linalg.norm(y), np.finfo(float).tiny))
               for x, y in zip(blocks, ref))


def verify(k: int = 32, n: int = 3, seed: int = 42, tolerance: float = 1e-8,
           problem: SmootherProblem | None = None, cores: int = 1) -> VerifyReport:
    """Cross-check every smoother against the dense oracle."""
    if problem is None:
        problem = generate_problem(k, n, seed)
    report = VerifyReport(passed=True, tolerance=tolerance)
    try:
        ref_est, ref_cov = dense_oracle(problem)
    except (KalmanError, np.linalg.LinAlgError) as err:
        report.failures["oracle"] = f"{type(err).__name__}: {err}"
        ref_est = ref_cov = None
    else:
        report.estimates = [u.tolist() for u in ref_est]
    for name in ("oddeven", "paige-saunders", "rts"):
        try:
            result = run_algorithm(name, problem, cores=cores)
        except UnsupportedProblem as err:
            report.skipped[name] = str(err)
            continue
        except (KalmanError, np.linalg.LinAlgError) as err:
            report.failures[name] = f"{type(err).__name__}: {err}"
            continue
        if ref_est is None:
            continue
        report.estimate_errors[name] = _rel(result.estimates, ref_est)
        report.covariance_errors[name] = _block_rel(result.covariances, ref_cov)
    worst = max([*report.estimate_errors.values(), *report.covariance_errors.values()], default=0.0)
    report.passed = not report.failures and worst <= tolerance
    return report
