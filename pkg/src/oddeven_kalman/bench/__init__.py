"""Benchmark harness and CLI for the smoothers."""

from .generate import generate_problem, random_orthonormal
from .harness import (
    BenchConfig,
    BenchRecord,
    BenchReport,
    BenchSummary,
    microbench,
    run_benchmark,
    sweep,
    verify,
)
from .problemio import load_problem, save_problem

__all__ = [
    "BenchConfig",
    "BenchRecord",
    "BenchReport",
    "BenchSummary",
    "generate_problem",
    "load_problem",
    "microbench",
    "random_orthonormal",
    "run_benchmark",
    "save_problem",
    "sweep",
    "verify",
]
