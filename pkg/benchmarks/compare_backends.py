"""Benchmark the compiled simulation kernel against the pure-Python loop.

Runs the same seeded simulation on both backends, checks the traces are
bit-identical, and reports rounds/second.

Usage: python benchmarks/compare_backends.py [-T ROUNDS] [--seeds N]
"""
import argparse
import time

import numpy as np

from datamkt import make_random_closeness, simulate
from datamkt.learning.engine import HAVE_COMPILED

CHECK_FIELDS = ("profiles", "sampled_gain", "realized_utility", "transactions",
                "observed_effective", "chosen_pulls", "active_count")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("-T", "--rounds", type=int, default=20_000)
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--learner", default="zooming")
    args = parser.parse_args()

    instance = make_random_closeness(3, 5, 1.0, seed=11, alpha=0.5)
    backends = ["python"] + (["compiled"] if HAVE_COMPILED else [])
    if not HAVE_COMPILED:
        print("compiled kernel not built; timing the python backend only\n")

    timings = {}
    traces = {}
    for backend in backends:
        t0 = time.perf_counter()
        for seed in range(args.seeds):
            traces[backend, seed] = simulate(instance, args.rounds,
                                             learners=args.learner, seed=seed,
                                             backend=backend)
        timings[backend] = time.perf_counter() - t0

    total = args.rounds * args.seeds
    print(f"{args.learner} learner, n=3 buyers, k=5 sellers, "
          f"T={args.rounds} x {args.seeds} seeds")
    print(f"{'backend':<10}{'seconds':>10}{'rounds/s':>14}")
    for backend in backends:
        dt = timings[backend]
        print(f"{backend:<10}{dt:>10.2f}{total / dt:>14,.0f}")
    if len(backends) == 2:
        print(f"\nspeedup: {timings['python'] / timings['compiled']:.1f}x")
        for seed in range(args.seeds):
            a, b = traces["python", seed], traces["compiled", seed]
            for field in CHECK_FIELDS:
                assert np.array_equal(getattr(a, field), getattr(b, field)), \
                    f"backend mismatch in {field} (seed {seed})"
        print("traces bit-identical across backends: OK")


if __name__ == "__main__":
    main()
