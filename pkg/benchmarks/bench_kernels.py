"""Wall-clock comparison of the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--steps 10000] [--paths 20000] [--repeat 3]

The first numba call per kernel includes JIT compilation (or cache load) and
is reported separately from the steady-state best-of-``repeat`` time.
"""
import argparse
import time

import numpy as np

from mlsg import kernels
from mlsg.model import baseline
from mlsg.riccati import TimeMesh, solve
from mlsg.sim import SimConfig, simulate
from mlsg.strategies import strategy_coefficients


def timed(fn, repeat):
    t0 = time.perf_counter()
    out = fn()
    first = time.perf_counter() - t0
    best = first
    for _ in range(repeat - 1):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return first, best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=10_000, help="Riccati mesh steps")
    ap.add_argument("--paths", type=int, default=20_000, help="Monte Carlo paths")
    ap.add_argument("--sim-steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    params = baseline()
    mesh = TimeMesh(params.horizon, args.steps)
    coeffs = strategy_coefficients(params, solve(params, mesh))
    cfg = SimConfig(args.paths, args.sim_steps, seed=7)

    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    rows = []
    results = {}
    for be in backends:
        prev = kernels.set_backend(be)
        try:
            f1, b1, sol = timed(lambda: solve(params, mesh), args.repeat)
            f2, b2, res = timed(lambda: simulate(params, coeffs, cfg, workers=1), args.repeat)
        finally:
            kernels.set_backend(prev)
        results[be] = (sol, res)
        rows.append((be, f1, b1, f2, b2))

    print(f"riccati solve: {args.steps} steps; simulate: {args.paths} paths x {args.sim_steps} steps, 1 worker")
    print(f"{'backend':8s} {'solve first':>12s} {'solve best':>11s} {'sim first':>10s} {'sim best':>9s}")
    for be, f1, b1, f2, b2 in rows:
        print(f"{be:8s} {f1:12.4f} {b1:11.4f} {f2:10.4f} {b2:9.4f}")
    if len(rows) == 2:
        print(f"speedup (best): solve x{rows[0][2] / rows[1][2]:.1f}, simulate x{rows[0][4] / rows[1][4]:.1f}")
        (s0, r0), (s1, r1) = results["numpy"], results["numba"]
        dsol = max(float(np.max(np.abs(a - b))) for a, b in zip(s0.trajectories(), s1.trajectories()))
        print(f"max |numpy - numba|: riccati {dsol:.2e}, J_s mean {abs(r0.j_s_mean - r1.j_s_mean):.2e}")


if __name__ == "__main__":
    main()
