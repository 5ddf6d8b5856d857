"""Compare the numba and numpy top-k search kernels on random unit shards.

Usage: python3 benchmarks/bench_search.py [--rows N ...] [--dim D] [--k K] [--repeat R]

Both kernels are also cross-checked for identical results on every shape.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from coral.vector_index import kernels


def unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    m = rng.standard_normal((n, d))
    return (m / np.linalg.norm(m, axis=1, keepdims=True)).astype(np.float32)


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    ap.add_argument("--dim", type=int, default=256)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"active backend: {kernels.BACKEND}")
    if kernels.topk_numba is None:
        print("numba unavailable (or CORAL_DISABLE_NUMBA set); timing numpy only")
    print(f"{'rows':>9} {'dim':>5} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for n in args.rows:
        m = unit_rows(rng, n, args.dim)
        q = unit_rows(rng, 1, args.dim)[0].astype(np.float64)
        t_np = best_of(lambda: kernels.topk_numpy(m, q, args.k), args.repeat)
        if kernels.topk_numba is not None:
            kernels.topk_numba(m, q, args.k)  # compile outside the timing
            t_nb = best_of(lambda: kernels.topk_numba(m, q, args.k), args.repeat)
            a, b = kernels.topk_numpy(m, q, args.k), kernels.topk_numba(m, q, args.k)
            assert np.array_equal(a[0], b[0]) and np.allclose(a[1], b[1], atol=1e-9), "kernels disagree"
            print(f"{n:>9} {args.dim:>5} {1e3 * t_np:>10.3f} {1e3 * t_nb:>10.3f} {t_np / t_nb:>7.2f}x")
        else:
            print(f"{n:>9} {args.dim:>5} {1e3 * t_np:>10.3f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
