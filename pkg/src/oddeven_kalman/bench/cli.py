"""Command-line entry point: ``bench {run,sweep,micro,verify,generate}``."""

from __future__ import annotations

import argparse
import json
import sys

from ..parallel import DEFAULT_CHUNK, available_cores
from . import harness
from .generate import generate_problem
from .problemio import load_problem, save_problem


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return values


def _add_problem_args(p: argparse.ArgumentParser, k: int, n: int) -> None:
    p.add_argument("--k", type=int, default=k, help="index of the last step (k+1 steps)")
    p.add_argument("--n", type=int, default=n, help="state and observation dimension")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--problem", metavar="FILE", help="load the problem from FILE instead of generating it")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="Odd-even Kalman smoother benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="time repeated runs of one algorithm")
    run.add_argument("--algorithm", choices=harness.ALGORITHMS, default="oddeven")
    _add_problem_args(run, 1000, 6)
    run.add_argument("--cores", type=int, default=1)
    run.add_argument("--chunk", type=int, default=DEFAULT_CHUNK)
    run.add_argument("--reps", type=int, default=5)
    run.add_argument("--out", default="-", help="CSV output path ('-' for stdout)")

    sw = sub.add_parser("sweep", help="cross product of core counts and chunk sizes")
    sw.add_argument("--algorithm", choices=harness.ALGORITHMS, default="oddeven")
    _add_problem_args(sw, 1000, 6)
    sw.add_argument("--cores", type=_int_list, default=[1, 2, 4, 8])
    sw.add_argument("--chunk", type=_int_list, default=[DEFAULT_CHUNK])
    sw.add_argument("--reps", type=int, default=5)
    sw.add_argument("--no-baseline", action="store_true", help="skip the Paige-Saunders reference timing")
    sw.add_argument("--out", default="-")

    mi = sub.add_parser("micro", help="four-phase embarrassingly parallel micro-benchmark")
    mi.add_argument("--k", type=int, default=100_000)
    mi.add_argument("--n", type=int, default=48)
    mi.add_argument("--cores", type=int, default=1)
    mi.add_argument("--reps", type=int, default=1)
    mi.add_argument("--out", default="-")

    ve = sub.add_parser("verify", help="cross-check all smoothers against the dense oracle")
    _add_problem_args(ve, 32, 3)
    ve.add_argument("--tol", type=float, default=1e-8)
    ve.add_argument("--cores", type=int, default=1)

    ge = sub.add_parser("generate", help="write a synthetic benchmark problem to a file")
    ge.add_argument("--k", type=int, required=True)
    ge.add_argument("--n", type=int, required=True)
    ge.add_argument("--seed", type=int, default=42)
    ge.add_argument("--out", required=True)
    return parser


def _problem(args):
    if args.problem:
        return load_problem(args.problem)
    return generate_problem(args.k, args.n, args.seed)


def _print_summaries(summaries, stream) -> None:
    for s in summaries:
        parts = [f"{s.algorithm} k={s.k} n={s.n} cores={s.cores} chunk={s.chunk}"]
        total = s.medians.get("total")
        if total is not None:
            parts.append(f"median total {total:.6f}s")
        if s.speedup is not None:
            parts.append(f"speedup {s.speedup:.2f}x")
        if s.flop_overhead is not None:
            parts.append(f"flop overhead {s.flop_overhead:.2f}x")
        if s.time_overhead is not None:
            parts.append(f"time overhead {s.time_overhead:.2f}x")
        if s.failed_reps:
            parts.append(f"FAILED reps {s.failed_reps}")
        print(", ".join(parts), file=stream)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    info = sys.stderr
    if args.command == "run":
        problem = _problem(args)
        cfg = harness.BenchConfig(algorithm=args.algorithm, k=problem.k, n=problem.steps[0].n,
                                  cores=args.cores, chunk=args.chunk, reps=args.reps, seed=args.seed,
                                  out=args.out)
        report = harness.run_benchmark(cfg, problem)
        _print_summaries([report.summary], info)
        return 1 if report.summary.failed_reps else 0
    if args.command == "sweep":
        problem = _problem(args)
        cfg = harness.BenchConfig(algorithm=args.algorithm, k=problem.k, n=problem.steps[0].n,
                                  chunk=args.chunk[0], reps=args.reps, seed=args.seed, out=args.out)
        if max(args.cores) > available_cores():
            print(f"note: {available_cores()} cores available; larger core counts oversubscribe", file=info)
        _, summaries = harness.sweep(cfg, args.cores, args.chunk, baseline=not args.no_baseline, problem=problem)
        _print_summaries(summaries, info)
        return 0
    if args.command == "micro":
        result = harness.microbench(args.k, args.n, args.cores, reps=args.reps)
        harness.write_csv(result.records, args.out)
        return 0
    if args.command == "verify":
        problem = _problem(args)
        report = harness.verify(tolerance=args.tol, problem=problem, cores=args.cores)
        out = report.as_dict()
        if out["estimates"] is not None and sum(len(u) for u in out["estimates"]) > 20:
            out["estimates"] = f"<{len(out['estimates'])} steps omitted>"
        print(json.dumps(out, indent=2))
        print("PASS" if report.passed else "FAIL", file=info)
        return 0 if report.passed else 1
    if args.command == "generate":
        save_problem(generate_problem(args.k, args.n, args.seed), args.out)
        return 0
    return 2  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
