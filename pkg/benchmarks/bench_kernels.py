"""Compiled vs pure-Python kernels, plus one end-to-end transform under each.

    python benchmarks/bench_kernels.py [--reps N] [--csv PATH]
"""

import argparse
import os
import statistics
import subprocess
import sys

from streamsky import bench, kernels


def transform_ms(pure):
    """Median eq-policy transform time in a fresh interpreter."""
    env = dict(os.environ, STREAMSKY_PURE_PYTHON="1" if pure else "0")
    code = (
        "import statistics;from streamsky import group,bench;from streamsky.policies import TriggerPolicy;"
        "r=bench.bench_crypto(group.setup(seed=b'k'),TriggerPolicy(42,'eq'),reps=15);"
        "print(statistics.median(r.seconds('transform'))*1e3)"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=7)
    ap.add_argument("--csv")
    args = ap.parse_args()

    report = bench.bench_kernels(args.reps)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(bench.to_csv(report))
    print(bench.render_table(report))
    if kernels.native is None:
        print("compiled kernels unavailable; only the Python fallback was measured")
        return
    native = kernels.native.BACKEND
    print(f"{'kernel':<26} {'speedup':>8}")
    for op in sorted({s.operation for s in report.samples}):
        fast = statistics.median(report.seconds(op, backend=native))
        slow = statistics.median(report.seconds(op, backend="python"))
        print(f"{op:<26} {slow / fast:>7.1f}x")
    c, p = transform_ms(False), transform_ms(True)
    print(f"{'transform eq (end to end)':<26} {p / c:>7.1f}x  ({c:.3f} ms vs {p:.3f} ms)")


if __name__ == "__main__":
    main()
