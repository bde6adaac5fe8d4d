"""Gradient wall time versus window count and worker count.

Speedups are relative to one window on one worker. The step count is rounded
up to a multiple of every requested window count so all runs do equal work.

Example:
    python scripts/run_benchmark.py --preset qft8 --windows 1,2,4,8 --workers 1,2,4,8
"""
import argparse
import os
from pathlib import Path

from msqoc.cli import cmd_benchmark
from msqoc.config import make_config


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--preset", default="qft8")
    p.add_argument("--windows", default="1,2,4,8")
    p.add_argument("--workers", default="1,2,4,8")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", default="out/benchmark")
    args = p.parse_args()

    Ms = [int(v) for v in args.windows.split(",")]
    ws = [int(v) for v in args.workers.split(",")]
    rows = cmd_benchmark(make_config(args.preset), Ms, ws, Path(args.out), args.repeats)
    print(f"{os.cpu_count()} CPU core(s)")
    print(f"{'M':>4} {'workers':>8} {'grad [s]':>10} {'speedup':>8} {'efficiency':>10}")
    for r in rows:
        print(f"{r['M']:4d} {r['workers']:8d} {r['grad_walltime_s']:10.4f} "
              f"{r['speedup']:8.2f} {r['speedup'] / r['workers']:10.2f}")


if __name__ == "__main__":
    main()
