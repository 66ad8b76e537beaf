"""Time the compiled and pure-Python sweep kernels on a one-year trace.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from carbonshift import kernels

CASES = [(1, 0.0, 24), (12, 0.0, 24), (24, 0.0, 24), (48, 0.0, 48), (167, 0.5, 168)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--hours", type=int, default=8760)
    args = ap.parse_args()
    values = np.random.default_rng(0).uniform(5, 800, args.hours)
    names = sorted(kernels.BACKENDS)
    print(f"selected backend: {kernels.BACKEND}; available: {', '.join(names)}")
    print(f"{'kernel':<12}{'full':>6}{'frac':>6}{'slack':>7}" + "".join(f"{n + ' ms':>14}" for n in names))
    totals = dict.fromkeys(names, 0.0)
    for kernel in ("deferred", "interrupted"):
        for full, frac, slack in CASES:
            row = f"{kernel:<12}{full:>6}{frac:>6}{slack:>7}"
            for n in names:
                fn = getattr(kernels.BACKENDS[n], f"sweep_{kernel}")
                t = min(timeit.repeat(lambda: fn(values, full, frac, slack), number=1, repeat=args.repeat))
                totals[n] += t
                row += f"{1000 * t:>14.2f}"
            print(row)
    print("total".ljust(31) + "".join(f"{1000 * totals[n]:>14.2f}" for n in names))
    if "cython" in totals:
        print(f"speedup cython vs python: {totals['python'] / totals['cython']:.1f}x")


if __name__ == "__main__":
    main()
