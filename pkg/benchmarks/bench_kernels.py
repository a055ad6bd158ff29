#!/usr/bin/env python3
"""Benchmark: compiled kernels vs the pure-Python fallback.

Times the two hot loops (integer witness search over a conjunction, and
formula evaluation over an exhaustive box) on workloads shaped like the
ones the analyses produce, then an end-to-end analysis with each backend.

Run after building the extension in place:

    python setup.py build_ext --inplace
    python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import random
import subprocess
import sys
import time
from pathlib import Path

from cmcheck._kernels import pure

try:
    from cmcheck._kernels import _core as compiled
except ImportError:
    compiled = None


def time_call(fn, *args, repeat=5):
    best = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best.append(time.perf_counter() - t0)
    return min(best)


def witness_workload():
    """Near-worst-case witness search: wide box, late constraints."""
    rng = random.Random(1)
    cases = []
    for _ in range(40):
        n = 3
        atoms = []
        for _ in range(4):
            terms = tuple((d, rng.choice([-2, -1, 1, 2])) for d in range(n))
            atoms.append((0, rng.randint(-40, -20), terms))
        cases.append((n, [-32] * n, [32] * n, atoms))
    return cases


def box_workload():
    """Abstraction-oracle style: minterm formulas over [-8, 8]^3."""
    rng = random.Random(2)
    progs = []
    for _ in range(60):
        n = 3
        derived = (((0, ((0, 1),)), (0, ((1, 1),))),)
        atoms = []
        for _ in range(5):
            terms = tuple((d, rng.choice([-2, -1, 1, 2]))
                          for d in rng.sample(range(n + 1), 2))
            atoms.append((rng.randint(0, 1), rng.randint(-6, 6), (0, terms)))
        code = [0]
        for i in range(1, len(atoms)):
            code.extend([i, -1 if i % 2 else -2])
        progs.append(((n, derived, tuple(atoms), tuple(code)), [-8] * n, [8] * n))
    return progs


def run_witness(backend, cases):
    for n, lows, highs, atoms in cases:
        backend.find_conjunction_witness(n, lows, highs, atoms)


def run_box(backend, progs):
    for prog, lows, highs in progs:
        backend.box_find_model(prog, lows, highs)


def end_to_end(pure_only: bool) -> float:
    env = {"CMCHECK_PURE_KERNELS": "1"} if pure_only else {}
    import os

    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "cmcheck.cli",
         str(Path(__file__).parent.parent / "programs" / "nonlinear_square.imp"),
         "--config", "predicate"],
        capture_output=True, env={**os.environ, **env})
    assert proc.returncode == 2, proc.stderr  # CONDITION is the expected verdict
    return time.perf_counter() - t0


def main():
    print(f"{'workload':<30} {'pure':>10} {'compiled':>10} {'speedup':>9}")
    rows = [
        ("conjunction witness search", run_witness, witness_workload()),
        ("formula over box", run_box, box_workload()),
    ]
    for name, fn, data in rows:
        t_pure = time_call(fn, pure, data)
        if compiled is None:
            print(f"{name:<30} {t_pure * 1e3:>8.1f}ms {'n/a':>10}")
            continue
        t_comp = time_call(fn, compiled, data)
        print(f"{name:<30} {t_pure * 1e3:>8.1f}ms {t_comp * 1e3:>8.1f}ms "
              f"{t_pure / t_comp:>8.1f}x")
    if compiled is not None:
        t_p = end_to_end(True)
        t_c = end_to_end(False)
        print(f"{'cmcheck predicate (e2e)':<30} {t_p * 1e3:>8.1f}ms "
              f"{t_c * 1e3:>8.1f}ms {t_p / t_c:>8.1f}x")
    # sanity: identical answers on the box workload
    for prog, lows, highs in box_workload():
        a = pure.box_find_model(prog, lows, highs)
        if compiled is not None:
            assert a == compiled.box_find_model(prog, lows, highs)
    print("backends agree on all benchmark inputs")


if __name__ == "__main__":
    main()
