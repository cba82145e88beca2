"""Compiled core versus NumPy fallback on the hot loops.

Run with ``python3 benchmarks/bench_kernels.py``. Prints best-of-N wall time
per kernel and the speedup, plus the end-to-end share spent in the solver.
"""
import argparse
import time

import numpy as np

from robust_precoding import kernels


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    K, n = 4, 100_000
    S = rng.standard_normal((n, K)) + 1j * rng.standard_normal((n, K))
    B = np.tril(rng.standard_normal((K, K)) + 1j * rng.standard_normal((K, K)), -1)
    r, w = 6, 7
    M = rng.standard_normal((r, w))
    r0 = rng.standard_normal(w)
    forms = np.stack([np.eye(r) * (1 + l) for l in range(6)])
    Z = rng.standard_normal((10_000, r)) * 0.3
    Z0 = Z[:10]
    return {
        "thp_precode (1e5 x 4)": (lambda m: m.thp_precode(S, B, 2.0)),
        "quad_values (1e4)": (lambda m: m.quad_values(Z, M, r0)),
        "radial_limit (1e4, L=6)": (lambda m: m.radial_limit(Z, forms)),
        "ascend (10 starts, 200 steps)": (lambda m: m.ascend(Z0, M, r0, forms, 200)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if kernels.BACKEND != "compiled":
        print("compiled core not built; only the fallback is available")
        return 1
    impl = kernels._impl
    fallback = kernels.python
    print(f"{'kernel':32s} {'compiled ms':>12s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        tc = best_of(lambda: fn(impl), args.repeat)
        tp = best_of(lambda: fn(fallback), args.repeat)
        print(f"{name:32s} {1e3 * tc:12.3f} {1e3 * tp:10.3f} {tp / tc:8.1f}x")

    from robust_precoding import ProblemData, QoSTargets, solve_power_min

    rng = np.random.default_rng(args.seed)
    H = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))) / np.sqrt(2)
    data = ProblemData.spherical(H, 1.0, QoSTargets.from_sinr_db([6.0] * 3), 0.05)
    t_solve = best_of(lambda: solve_power_min(data, certify_design=False), args.repeat)
    t_all = best_of(lambda: solve_power_min(data, rng=np.random.default_rng(0)), args.repeat)
    print(f"\nrobust design 3x3: solve {1e3 * t_solve:.1f} ms, solve + certify {1e3 * t_all:.1f} ms")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
