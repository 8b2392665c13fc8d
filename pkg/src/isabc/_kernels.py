"""Hot inner-loop kernels with numba acceleration and a pure-numpy fallback.

The Monte-Carlo harness spends most of its time in a handful of
trial-batched loops: applying delayed channel taps, gathering per-device
bin energies, counting Gray-coded bit errors, and separation-constrained
peak picking.  Each kernel here has a numba ``@njit`` implementation and a
pure-numpy one; set ``ISABC_NUMBA=0`` in the environment to force the
numpy path.  ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

_WANT_NUMBA = os.environ.get("ISABC_NUMBA", "1") != "0"
_HAVE_NUMBA = False
if _WANT_NUMBA:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - environment without numba
        _HAVE_NUMBA = False


def backend() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


# -- scatter_taps: out[b] += sum_t gains[b, t] * shift(base[b], delays[t]) --
# Zero-fill shifts (linear convolution against a sparse tap line); the
# shifted-out tail beyond the block end is dropped.

def _scatter_taps_np(out, base, gains, delays):
    L = base.shape[1]
    for t, d in enumerate(delays):
        if d == 0:
            out += gains[:, t, None] * base
        elif d < L:
            out[:, d:] += gains[:, t, None] * base[:, : L - d]
    return out


# -- scatter_taps_shared: same, but every trial shares one base row --

def _scatter_taps_shared_np(out, base, coeffs, delays):
    L = base.shape[0]
    for t, d in enumerate(delays):
        if d == 0:
            out += coeffs[:, t, None] * base[None, :]
        elif d < L:
            out[:, d:] += coeffs[:, t, None] * base[None, : L - d]
    return out


# -- cluster_energies: E[b, z] = sum_k |Y[b, bins[z, k]]|^2 --

def _cluster_energies_np(block_abs2, bins):
    return block_abs2[:, bins].sum(axis=2)


# -- gray_bit_errors: per-trial Hamming distance between Gray-index arrays --

def _gray_bit_errors_np(tx_idx, rx_idx, nbits):
    x = np.bitwise_xor(tx_idx, rx_idx)
    errs = np.zeros(x.shape[0], dtype=np.int64)
    for b in range(nbits):
        errs += ((x >> b) & 1).sum(axis=1)
    return errs


# -- greedy_peaks: per-trial largest peaks with a minimum index separation --
# Ties break toward the lower bin; circular distance on an N-point grid.

def _greedy_peaks_np(mags, count, min_sep):
    B, N = mags.shape
    out = np.full((B, count), -1, dtype=np.int64)
    for b in range(B):
        order = np.argsort(-mags[b], kind="stable")
        taken = 0
        for idx in order:
            ok = True
            for j in range(taken):
                d = abs(int(idx) - int(out[b, j]))
                if min(d, N - d) < min_sep:
                    ok = False
                    break
            if ok:
                out[b, taken] = idx
                taken += 1
                if taken == count:
                    break
    return out


if _HAVE_NUMBA:

    @njit(cache=True)
    def _scatter_taps_nb(out, base, gains, delays):
        B, L = base.shape
        T = delays.shape[0]
        for b in range(B):
            for t in range(T):
                d = delays[t]
                g = gains[b, t]
                for n in range(d, L):
                    out[b, n] += g * base[b, n - d]
        return out

    @njit(cache=True)
    def _scatter_taps_shared_nb(out, base, coeffs, delays):
        B, L = out.shape
        T = delays.shape[0]
        for b in range(B):
            for t in range(T):
                d = delays[t]
                c = coeffs[b, t]
                for n in range(d, L):
                    out[b, n] += c * base[n - d]
        return out

    @njit(cache=True)
    def _cluster_energies_nb(block_abs2, bins):
        B = block_abs2.shape[0]
        Z, K = bins.shape
        out = np.zeros((B, Z))
        for b in range(B):
            for z in range(Z):
                acc = 0.0
                for k in range(K):
                    acc += block_abs2[b, bins[z, k]]
                out[b, z] = acc
        return out

    @njit(cache=True)
    def _gray_bit_errors_nb(tx_idx, rx_idx, nbits):
        B, S = tx_idx.shape
        out = np.zeros(B, dtype=np.int64)
        for b in range(B):
            acc = 0
            for s in range(S):
                x = tx_idx[b, s] ^ rx_idx[b, s]
                while x:
                    acc += x & 1
                    x >>= 1
            out[b] = acc
        return out

    @njit(cache=True)
    def _greedy_peaks_nb(mags, count, min_sep):
        B, N = mags.shape
        out = np.full((B, count), -1, dtype=np.int64)
        order = np.empty(N, dtype=np.int64)
        for b in range(B):
            order[:] = np.argsort(-mags[b], kind="mergesort")
            taken = 0
            for i in range(N):
                idx = order[i]
                ok = True
                for j in range(taken):
                    d = abs(idx - out[b, j])
                    if min(d, N - d) < min_sep:
                        ok = False
                        break
                if ok:
                    out[b, taken] = idx
                    taken += 1
                    if taken == count:
                        break
        return out


def scatter_taps(out, base, gains, delays):
    """Accumulate delayed, scaled copies of each row of ``base`` into ``out``.

    out, base: (B, L) complex; gains: (B, T) complex; delays: (T,) int >= 0.
    """
    delays = np.asarray(delays, dtype=np.int64)
    if _HAVE_NUMBA:
        return _scatter_taps_nb(out, base, np.ascontiguousarray(gains), delays)
    return _scatter_taps_np(out, base, gains, delays)


def scatter_taps_shared(out, base, coeffs, delays):
    """Accumulate delayed copies of a shared base row, scaled per trial.

    out: (B, L) complex; base: (L,) complex; coeffs: (B, T); delays: (T,).
    """
    delays = np.asarray(delays, dtype=np.int64)
    if _HAVE_NUMBA:
        return _scatter_taps_shared_nb(out, np.ascontiguousarray(base), np.ascontiguousarray(coeffs), delays)
    return _scatter_taps_shared_np(out, base, coeffs, delays)


def cluster_energies(block_abs2, bins):
    """Sum |Y|^2 over each device's bin set.  (B, N) x (Z, K) -> (B, Z)."""
    bins = np.asarray(bins, dtype=np.int64)
    if _HAVE_NUMBA:
        return _cluster_energies_nb(np.ascontiguousarray(block_abs2), bins)
    return _cluster_energies_np(block_abs2, bins)


def gray_bit_errors(tx_idx, rx_idx, nbits):
    """Count bit errors between Gray-coded symbol index arrays, per trial."""
    tx_idx = np.ascontiguousarray(tx_idx, dtype=np.int64)
    rx_idx = np.ascontiguousarray(rx_idx, dtype=np.int64)
    if _HAVE_NUMBA:
        return _gray_bit_errors_nb(tx_idx, rx_idx, nbits)
    return _gray_bit_errors_np(tx_idx, rx_idx, nbits)


def greedy_peaks(mags, count, min_sep):
    """Pick the ``count`` largest well-separated bins per row of ``mags``."""
    mags = np.ascontiguousarray(mags, dtype=np.float64)
    if _HAVE_NUMBA:
        return _greedy_peaks_nb(mags, count, min_sep)
    return _greedy_peaks_np(mags, count, min_sep)
