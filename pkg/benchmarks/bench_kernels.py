"""Compare the numba kernels with the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Part 1 times the configuration-count accumulation kernel directly.  Part 2
runs a small naive and structured solve in two subprocesses, one with
MANYAGENT_PURE_NUMPY=1, since the backend is fixed at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from manyagent import kernels

SOLVE = """
import time
from manyagent import build_domain, naive_solve, solve_exact
d = build_domain(n={n})
for name, fn in (("structured", solve_exact), ("naive", naive_solve)):
    fn(None, {h}, 0.9, build_domain(n=2))  # compile every kernel the timed run needs
    t = time.perf_counter()
    r = fn(None, {h}, 0.9, d)
    print(name, f"{{time.perf_counter() - t:.3f}}", repr(r.value))
"""


def kernel_table(repeat: int):
    rng = np.random.default_rng(0)
    print(f"{'N':>6} {'L':>2} {'numpy s':>10} {'numba s':>10} {'max |diff|':>11}")
    for n, L in ((100, 1), (1000, 1), (100, 2), (500, 2), (100, 3), (200, 3)):
        p = rng.dirichlet(np.ones(L + 1), size=n)
        ref = kernels.accumulate_numpy(p, L)
        t_np = min(timeit.repeat(lambda: kernels.accumulate_numpy(p, L), number=1, repeat=repeat))
        if kernels.accumulate_numba is None:
            print(f"{n:>6} {L:>2} {t_np:>10.4f} {'n/a':>10}")
            continue
        kernels.accumulate_numba(p, L)
        t_nb = min(timeit.repeat(lambda: kernels.accumulate_numba(p, L), number=1, repeat=repeat))
        diff = np.abs(kernels.accumulate_numba(p, L) - ref).max()
        print(f"{n:>6} {L:>2} {t_np:>10.4f} {t_nb:>10.4f} {diff:>11.2e}")


def solve_table(n: int, h: int):
    print(f"\nprotest N={n}, H={h}")
    for label, extra in (("numba", {}), ("numpy", {"MANYAGENT_PURE_NUMPY": "1"})):
        env = {**os.environ, **extra}
        out = subprocess.run([sys.executable, "-c", SOLVE.format(n=n, h=h)], env=env,
                             capture_output=True, text=True, check=True).stdout
        for line in out.splitlines():
            solver, secs, value = line.split()
            print(f"  {label:6} {solver:11} {secs:>8} s  value {value}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--horizon", type=int, default=2)
    args = ap.parse_args()
    kernel_table(args.repeat)
    solve_table(args.n, args.horizon)


if __name__ == "__main__":
    main()
