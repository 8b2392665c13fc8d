#!/usr/bin/env python3
"""Compare the numba kernels against their pure-numpy fallbacks.

Run directly:  python benchmarks/bench_kernels.py
Force the fallback engine-wide with ISABC_NUMBA=0 (this script times both
paths explicitly regardless of the flag).
"""

import time

import numpy as np

from isabc import _kernels as K


def best_of(fn, reps=7):
    t = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        t = min(t, time.perf_counter() - t0)
    return t


def main():
    rng = np.random.default_rng(0)
    B, L, N = 4096, 320, 256
    base = rng.standard_normal((B, L)) + 1j * rng.standard_normal((B, L))
    row = base[0].copy()
    gains = rng.standard_normal((B, 6)) + 1j * rng.standard_normal((B, 6))
    delays = np.array([0, 3, 7, 12, 20, 33], dtype=np.int64)
    abs2 = rng.standard_normal((B, N)) ** 2
    bins = rng.integers(0, N, size=(3, 2))
    tx = rng.integers(0, 64, size=(B, 224))
    rx = rng.integers(0, 64, size=(B, 224))
    mags = rng.random((B, N))

    cases = []
    if K.backend() == "numba":
        out = np.zeros_like(base)
        cases = [
            ("scatter_taps", lambda: K._scatter_taps_nb(out * 0, base, gains, delays),
             lambda: K._scatter_taps_np(out * 0, base, gains, delays)),
            ("scatter_taps_shared", lambda: K._scatter_taps_shared_nb(out * 0, row, gains, delays),
             lambda: K._scatter_taps_shared_np(out * 0, row, gains, delays)),
            ("cluster_energies", lambda: K._cluster_energies_nb(abs2, bins),
             lambda: K._cluster_energies_np(abs2, bins)),
            ("gray_bit_errors", lambda: K._gray_bit_errors_nb(tx, rx, 6),
             lambda: K._gray_bit_errors_np(tx, rx, 6)),
            ("greedy_peaks", lambda: K._greedy_peaks_nb(mags, 3, 8),
             lambda: K._greedy_peaks_np(mags, 3, 8)),
        ]
    else:
        print("numba unavailable or disabled; nothing to compare")
        return

    print(f"batch={B}  block={L}  bins={N}")
    print(f"{'kernel':22s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, nb, npx in cases:
        nb()  # JIT warmup
        t_nb = best_of(nb)
        t_np = best_of(npx)
        print(f"{name:22s} {t_nb*1e3:9.2f}ms {t_np*1e3:9.2f}ms {t_np/t_nb:7.1f}x")


if __name__ == "__main__":
    main()
