"""Time the compiled and pure-Python kernels on identical inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--slots T] [--users U]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from flpricing import kernels


def workloads(slots: int, users: int, seed: int):
    rng = np.random.default_rng(seed)
    h = rng.uniform(0.0, 50.0, slots)
    prices = rng.uniform(0.0, 100.0, slots)
    lo = np.zeros(slots)
    hi = np.full(slots, np.inf)
    order = rng.permutation(users).astype(np.int64)
    values = rng.uniform(50.0, 500.0, users)

    def brd(mod):
        slot = np.full(users, -1, dtype=np.int64)
        loads = np.zeros(slots)
        for _ in range(3):
            mod.brd_sweep(order, values, slot, loads, prices, h, 0.01, 1e-9)

    return {
        "box_allocate": lambda mod: mod.box_allocate(h, 0.01, 0.01, lo, hi, float(users)),
        "wardrop_level": lambda mod: mod.wardrop_level(prices, h, 0.01, float(users)),
        "water_level": lambda mod: mod.water_level(h, float(users)),
        "brd_sweep x3": brd,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--slots", type=int, default=24)
    parser.add_argument("--users", type=int, default=5000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    names = kernels.available()
    mods = {name: kernels.backend(name) for name in names}
    print(f"backends: {', '.join(names)}; active: {kernels.BACKEND}; T={args.slots}, users={args.users}")
    print(f"{'kernel':<16}" + "".join(f"{n + ' (ms)':>14}" for n in names) + ("      speedup" if len(names) > 1 else ""))
    for label, run in workloads(args.slots, args.users, args.seed).items():
        times = {}
        for name, mod in mods.items():
            number = max(1, int(0.2 / max(timeit.timeit(lambda: run(mod), number=1), 1e-6)))
            best = min(timeit.repeat(lambda: run(mod), number=number, repeat=args.repeat)) / number
            times[name] = 1e3 * best
        line = f"{label:<16}" + "".join(f"{times[n]:>14.4f}" for n in names)
        if len(names) > 1:
            line += f"{times['python'] / times['cython']:>12.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
