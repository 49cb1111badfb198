"""Benchmark the compiled kernels against the pure-Python fallback.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from staircase import _kernels, _kernels_py


def clock(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    n = 1_000_000
    rng = np.random.default_rng(0)
    u_out = rng.random(n)
    u_noise = rng.random(n)
    xs, ys = _kernels.simulate_steps(0, 0.5, 0.0, 0.0, 0.0, 0, 0.0, 1.0,
                                     u_out, u_noise)

    rows = []
    for label, args in [
        ("simulate 1e6 staircase steps",
         ("simulate_steps", (0, 0.5, 0.0, 0.0, 0.0, 0, 0.0, 1.0, u_out, u_noise))),
        ("simulate 1e6 bisection steps (probit)",
         ("simulate_steps", (3, -1.0, 1.0, 0.2, 0.0, 1, 0.0, 1.0, u_out, u_noise))),
        ("loglik+grad+hess over 1e6 trials (logit)",
         ("loglik_grad_hess", (xs, ys, 0.1, 0.9, 0))),
        ("loglik+grad+hess over 1e6 trials (probit)",
         ("loglik_grad_hess", (xs, ys, 0.1, 0.9, 1))),
    ]:
        fname, fargs = args
        tc = clock(getattr(_kernels, fname), *fargs)
        tp = clock(getattr(_kernels_py, fname), *fargs, repeat=2)
        rows.append((label, tc, tp, tp / tc))

    w = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{w}}  {'compiled':>10}  {'python':>10}  {'speedup':>8}")
    for label, tc, tp, ratio in rows:
        print(f"{label:<{w}}  {tc * 1e3:>8.1f}ms  {tp * 1e3:>8.1f}ms  {ratio:>7.1f}x")


if __name__ == "__main__":
    main()
