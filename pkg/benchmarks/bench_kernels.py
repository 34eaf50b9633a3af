"""Time the compiled and numpy pair-sum kernels on the same assembly.

    python3 benchmarks/bench_kernels.py --n 16 32 48 --repeat 5
"""

import argparse
import time

import numpy as np

from nehari_lab import kernels
from nehari_lab.model import build_grid
from nehari_lab.operators import build_nonlocal, nonlocal_terms


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[16, 32, 48])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--s", type=float, default=0.5)
    ap.add_argument("--q", type=float, default=1.8)
    args = ap.parse_args()

    backends = ["python"]
    try:
        kernels.get_backend("compiled")
        backends.insert(0, "compiled")
    except ImportError:
        print("compiled extension not built; timing the numpy kernels only")

    rng = np.random.default_rng(0)
    print(f"{'n':>4} {'nodes':>6} {'backend':>9} {'energy [s]':>11} {'grad [s]':>10} {'max |dE| diff':>14}")
    for n in args.n:
        grid = build_grid((1.0, 1.0), n)
        asm = build_nonlocal(grid, args.s, args.q)
        u = rng.uniform(-1.0, 1.0, grid.interior_count)
        ref = None
        for name in backends:
            t_e = best_time(lambda: nonlocal_terms(u, asm, backend=name), args.repeat)
            t_g = best_time(lambda: nonlocal_terms(u, asm, grad=True, backend=name), args.repeat)
            _, dE = nonlocal_terms(u, asm, grad=True, backend=name)
            diff = 0.0 if ref is None else float(np.max(np.abs(dE - ref)))
            ref = dE if ref is None else ref
            print(f"{n:>4} {grid.interior_count:>6} {name:>9} {t_e:>11.4f} {t_g:>10.4f} {diff:>14.2e}")


if __name__ == "__main__":
    main()
