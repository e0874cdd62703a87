"""Time the compiled and numpy log-ratio kernels over rows and bin counts.

    python3 benchmarks/bench_kernels.py [--rows 4000] [--repeats 5]

Prints seconds per call for each backend, the speed-up, the maximum
absolute disagreement and the fitted exponent of time against B.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from cid.kernels import BACKENDS, log_ratio_rows


def random_factors(rows: int, bins: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return (
        rng.normal(size=(rows, bins)),
        rng.normal(size=(bins, bins)),
        rng.normal(size=(rows, bins)),
        rng.integers(0, bins, rows),
        rng.integers(0, bins, rows),
    )


def best_time(fn, args, repeats: int) -> float:
    fn(*args)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=4000)
    parser.add_argument("--bins", type=int, nargs="+", default=[5, 10, 20, 40, 80])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)

    backends = sorted(BACKENDS)
    print(f"rows = {args.rows}; backends: {', '.join(backends)}")
    header = f"{'B':>4} " + " ".join(f"{b + ' [s]':>14}" for b in backends)
    if len(backends) > 1:
        header += f" {'speed-up':>9} {'max |diff|':>11}"
    print(header)
    times = {b: [] for b in backends}
    for B in args.bins:
        factors = random_factors(args.rows, B)
        results = {}
        for b in backends:
            times[b].append(best_time(lambda *a: log_ratio_rows(*a, backend=b), factors, args.repeats))
            results[b] = log_ratio_rows(*factors, backend=b)
        line = f"{B:>4} " + " ".join(f"{times[b][-1]:>14.6f}" for b in backends)
        if len(backends) > 1:
            diff = float(np.max(np.abs(results["compiled"] - results["python"])))
            line += f" {times['python'][-1] / times['compiled'][-1]:>9.2f} {diff:>11.2e}"
        print(line)
    logB = np.log(args.bins)
    for b in backends:
        slope = np.polyfit(logB, np.log(times[b]), 1)[0]
        print(f"{b}: time ~ B^{slope:.2f}")


if __name__ == "__main__":
    main()
