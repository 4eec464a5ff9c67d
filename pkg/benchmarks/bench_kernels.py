"""Numba vs. numpy timings for the three hot kernels and one end-to-end CGO solve.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 1.0]

The end-to-end row flips SCATTERLAB_NUMBA between runs and clears the kernel-table cache,
so it measures what a user sees when setting the flag.
"""
from __future__ import annotations

import argparse
import os
import time

import numpy as np

from scatterlab._accel import NUMBA_AVAILABLE
from scatterlab._kernels import faddeev_remainder, nudft, outgoing_green, remainder_rule
from scatterlab.faddeev import clear_kernel_cache, solve_cgo, theta_pair
from scatterlab.medium import Grid3, potential_of, standard_pair


def best_of(fn, repeat):
    fn()                                   # warm-up (JIT compile, caches)
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return min(ts)


def cases(size):
    rng = np.random.default_rng(0)
    n = int(4000 * size)
    r, z = rng.uniform(0, 2, n), rng.uniform(-2, 2, n)
    rule = remainder_rule(4.0, 1.0, 3.5)
    x = rng.normal(size=(int(20000 * size), 3))
    p = rng.normal(size=(200, 3))
    c = rng.normal(size=x.shape[0]) + 0j
    Y = rng.normal(size=(int(1000 * size), 3))
    return {
        "faddeev_remainder": lambda nb: faddeev_remainder(r, z, rule, use_numba=nb),
        "nudft": lambda nb: nudft(x, p, c, use_numba=nb),
        "outgoing_green": lambda nb: outgoing_green(Y, Y, 1.0, use_numba=nb),
    }


def end_to_end(flag: str):
    os.environ["SCATTERLAB_NUMBA"] = flag
    clear_kernel_cache()
    g = Grid3(2.0, 32)
    v = potential_of(standard_pair(g)[0], 1.0)
    k = theta_pair((1.0, 0.5, 0.0), 1.0, 4.0).k
    t = time.perf_counter()
    solve_cgo(v, k)
    return time.perf_counter() - t


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=float, default=1.0, help="problem-size multiplier")
    args = ap.parse_args()
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<20}{'numpy [s]':>12}{'numba [s]':>12}{'speed-up':>10}  max |diff|")
    for name, fn in cases(args.size).items():
        a, b = fn(False), fn(True)
        tn = best_of(lambda: fn(False), args.repeat)
        tj = best_of(lambda: fn(True), args.repeat)
        print(f"{name:<20}{tn:>12.4f}{tj:>12.4f}{tn / tj:>10.1f}  {np.max(np.abs(a - b)):.1e}")
    end_to_end("1")                          # compile outside the timed run
    tn, tj = end_to_end("0"), end_to_end("1")
    print(f"{'solve_cgo (Nx=32)':<20}{tn:>12.4f}{tj:>12.4f}{tn / tj:>10.1f}")


if __name__ == "__main__":
    main()
