"""Timing comparison of the numba-jitted symmetric-function kernels against
the pure-numpy fallback (the path selected by SIGMAK_NO_NUMBA=1).

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from sigmak import _kernels


def bench(fn, lam, repeats=5):
    fn(lam[:16])  # warm up (jit compile)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(lam)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24} {'batch':>9} {'n':>3} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for n in (3, 4, 5):
        for m in (10_000, 200_000):
            lam = rng.standard_normal((m, n)) + 2.0
            pairs = [
                ("esp_table", _kernels.esp_table_numpy, _kernels.esp_table_numba),
                ("esp_deleted_table", _kernels.esp_deleted_table_numpy,
                 _kernels.esp_deleted_table_numba),
            ]
            for name, f_np, f_nb in pairs:
                t_np = bench(f_np, lam)
                if f_nb is None:
                    print(f"{name:<24} {m:>9} {n:>3} {t_np*1e3:>9.2f}ms {'n/a':>10}")
                    continue
                t_nb = bench(f_nb, lam)
                print(
                    f"{name:<24} {m:>9} {n:>3} {t_np*1e3:>9.2f}ms "
                    f"{t_nb*1e3:>9.2f}ms {t_np/t_nb:>7.1f}x"
                )


if __name__ == "__main__":
    main()
