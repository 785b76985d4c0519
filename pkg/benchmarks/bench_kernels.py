"""Time the numba and pure-numpy kernels side by side.

    python benchmarks/bench_kernels.py [--reps 5] [--sizes 10,50,200]

Both flavours are called directly, so ``DATASCHE_NUMBA`` does not matter here.
Results are also checked for agreement.
"""

import argparse
import time

import numpy as np

from datasche import kernels
from datasche.training import _interior_start, pair_log_masks, pair_log_objective


def best_of(fn, reps):
    out, best = None, float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_assignment(n, reps, rng):
    cost = rng.uniform(-10, 10, (n, 3 * n))
    fast, a = best_of(lambda: kernels.assign_min_cost_numba(cost), reps)
    slow, b = best_of(lambda: kernels.assign_min_cost_numpy(cost), reps)
    rows = np.arange(n)
    agree = abs(cost[rows, a].sum() - cost[rows, b].sum()) < 1e-9
    return fast, slow, agree


def bench_barrier(n, reps, rng):
    coef = rng.uniform(0.2, 3.0, (n, 4))
    R = rng.uniform(1.0, 50.0, (n, 2))
    caps = np.array([5.0 * n, 10.0 * n, 10.0 * n])
    free, act = pair_log_masks(coef, R, caps)
    v0 = _interior_start(free, R, caps)
    args = (coef, free, act, R, caps, v0, 1e-9, 20.0, 80)
    fast, a = best_of(lambda: kernels.pair_log_barrier_numba(*args), reps)
    slow, b = best_of(lambda: kernels.pair_log_barrier_numpy(*args), reps)
    fa, fb = pair_log_objective(coef, a, act), pair_log_objective(coef, b, act)
    return fast, slow, abs(fa - fb) <= 1e-6 * max(1.0, abs(fb))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--sizes", default="10,50,200")
    args = p.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(0)

    # trigger compilation outside the timed region
    bench_assignment(2, 1, rng)
    bench_barrier(2, 1, rng)

    print(f"{'kernel':<12}{'n':>6}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}{'agree':>8}")
    for name, fn in (("assignment", bench_assignment), ("pair-log", bench_barrier)):
        for n in sizes:
            fast, slow, agree = fn(n, args.reps, rng)
            print(f"{name:<12}{n:>6}{fast * 1e3:>12.3f}{slow * 1e3:>12.3f}{slow / fast:>10.1f}{str(agree):>8}")


if __name__ == "__main__":
    main()
