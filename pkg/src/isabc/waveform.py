"""Unified OFDM + chirp-multicarrier block synthesis and analysis.

The affine transform pair used throughout is the unitary sandwich

    idaft(x)[n] = e^{-j2pi c1 n^2} * IDFT(x[m] e^{-j2pi c2 m^2})[n]
    daft(s)[m]  = e^{+j2pi c2 m^2} * DFT(s[n] e^{+j2pi c1 n^2})[m]

with the symmetric 1/sqrt(N) DFT normalization, so Parseval holds with no
bookkeeping constants and daft(idaft(x)) == x.  With c1 = c1'/(2N) and even
c1', a circular delay of ell samples moves affine index i to
(i + c1'*ell) mod N; this delay-shift identity is the backbone of both the
backscatter detector and the dechirp range estimator, and the quadratic
phase sign here is the one that realizes it with a positive shift.

For c1 = c2 = 0 the pair degenerates to the plain IDFT/DFT, which is also
what the OFDM path uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, SparsityViolation
from .params import ComplexBlock, Domain, SystemConfig

SPARSITY_TOL = 1e-10


def _chirp(n_fft: int, c1: float) -> np.ndarray:
    n = np.arange(n_fft)
    return np.exp(-2j * np.pi * c1 * n * n)


def _c2_twist(n_fft: int, c2: float) -> np.ndarray:
    m = np.arange(n_fft)
    return np.exp(-2j * np.pi * c2 * m * m)


def idaft(affine_vec, cfg: SystemConfig) -> ComplexBlock:
    """Synthesis transform: affine-domain vector -> time block, O(N log N)."""
    x = _samples(affine_vec)
    if x.shape[-1] != cfg.n_fft:
        raise DimensionMismatch(f"expected length {cfg.n_fft}, got {x.shape[-1]}")
    y = np.fft.ifft(x * _c2_twist(cfg.n_fft, cfg.c2), norm="ortho", axis=-1)
    y = y * _chirp(cfg.n_fft, cfg.c1)
    return ComplexBlock(y, Domain.TIME) if y.ndim == 1 else y


def daft(time_vec, cfg: SystemConfig) -> ComplexBlock:
    """Analysis transform: time block -> affine-domain vector, O(N log N)."""
    s = _samples(time_vec)
    if s.shape[-1] != cfg.n_fft:
        raise DimensionMismatch(f"expected length {cfg.n_fft}, got {s.shape[-1]}")
    y = np.fft.fft(s * np.conj(_chirp(cfg.n_fft, cfg.c1)), norm="ortho", axis=-1)
    y = y * np.conj(_c2_twist(cfg.n_fft, cfg.c2))
    return ComplexBlock(y, Domain.AFFINE) if y.ndim == 1 else y


def daft_direct(time_vec, cfg: SystemConfig) -> np.ndarray:
    """O(N^2) kernel-sum evaluation of daft, kept as an independent oracle."""
    s = _samples(time_vec)
    N = cfg.n_fft
    n = np.arange(N)
    m = np.arange(N)[:, None]
    kernel = np.exp(2j * np.pi * (cfg.c1 * n * n + cfg.c2 * m * m)) * np.exp(-2j * np.pi * m * n / N)
    return kernel @ s / np.sqrt(N)


def generate_pilot_time(cfg: SystemConfig) -> ComplexBlock:
    """Constant-envelope chirp pilot carrying sqrt(P_pilot) at the active index.

    Equivalent to idaft of a vector holding sqrt(P_pilot) at pilot_index;
    block energy equals P_pilot exactly and |p[n]| is the same for all n.
    The block consists of c1' repetitions of a length-M discrete chirp, each
    repetition multiplied by a segment-constant unit phasor.
    """
    N = cfg.n_fft
    n = np.arange(N)
    amp = np.sqrt(cfg.p_pilot / N)
    phase = np.exp(2j * np.pi * cfg.pilot_index * n / N)
    c2_ph = np.exp(-2j * np.pi * cfg.c2 * cfg.pilot_index**2)
    return ComplexBlock(amp * _chirp(N, cfg.c1) * phase * c2_ph, Domain.TIME)


@dataclass(frozen=True)
class PilotSpec:
    """Frequency-domain footprint of the pilot: M bins spaced c1' apart."""

    index: int
    amplitude: float
    afdm_bins: np.ndarray


def pilot_to_frequency(pilot: ComplexBlock, cfg: SystemConfig):
    """DFT the pilot and locate its sparse frequency support.

    Returns (PilotSpec, frequency ComplexBlock).  Raises SparsityViolation
    unless >= 1 - 1e-10 of the energy sits on exactly M bins spaced
    c1_prime apart (leakage indicates a mis-derived c1).
    """
    p = _samples(pilot)
    if p.shape[0] != cfg.n_fft:
        raise DimensionMismatch("pilot length != n_fft")
    P = np.fft.fft(p, norm="ortho")
    M = cfg.m_chirp
    order = np.argsort(np.abs(P))[::-1]
    bins = np.sort(order[:M])
    total = float(np.sum(np.abs(P) ** 2))
    captured = float(np.sum(np.abs(P[bins]) ** 2))
    if captured < (1.0 - SPARSITY_TOL) * total:
        raise SparsityViolation(
            f"pilot energy leaks off the {M}-bin grid ({captured / total:.12f} captured)"
        )
    if M > 1 and not np.all(np.diff(bins) == cfg.c1_prime):
        raise SparsityViolation("pilot bins are not uniformly spaced by c1_prime")
    spec = PilotSpec(index=cfg.pilot_index, amplitude=np.sqrt(cfg.p_pilot), afdm_bins=bins)
    return spec, ComplexBlock(P, Domain.FREQUENCY)


@lru_cache(maxsize=32)
def afdm_bin_set(cfg: SystemConfig) -> np.ndarray:
    """Frequency bins occupied by the pilot, determined numerically."""
    spec, _ = pilot_to_frequency(generate_pilot_time(cfg), cfg)
    return spec.afdm_bins


@lru_cache(maxsize=32)
def ofdm_bin_set(cfg: SystemConfig) -> np.ndarray:
    """Complementary frequency bins available to OFDM data."""
    return np.setdiff1d(np.arange(cfg.n_fft), afdm_bin_set(cfg))


@dataclass(frozen=True)
class OfdmGrid:
    """QAM payload on the subcarriers left free by the pilot."""

    data_symbols: np.ndarray
    active_bins: np.ndarray

    def __post_init__(self):
        ds = np.asarray(self.data_symbols, dtype=np.complex128)
        ab = np.asarray(self.active_bins, dtype=np.int64)
        object.__setattr__(self, "data_symbols", ds)
        object.__setattr__(self, "active_bins", ab)
        if ds.shape[0] != ab.shape[0]:
            raise DimensionMismatch("one data symbol per active bin required")


def ofdm_modulate(grid: OfdmGrid, cfg: SystemConfig) -> ComplexBlock:
    """IDFT synthesis of the OFDM component; inactive bins stay zero."""
    if np.intersect1d(grid.active_bins, afdm_bin_set(cfg)).size:
        raise DimensionMismatch("OFDM grid overlaps the pilot's frequency bins")
    X = np.zeros(cfg.n_fft, dtype=np.complex128)
    X[grid.active_bins] = grid.data_symbols
    return ComplexBlock(np.fft.ifft(X, norm="ortho"), Domain.TIME)


def compose(s_ofdm, pilot) -> ComplexBlock:
    """Elementwise superposition of the OFDM and pilot time blocks."""
    a, b = _samples(s_ofdm), _samples(pilot)
    if a.shape != b.shape:
        raise DimensionMismatch("blocks differ in length")
    return ComplexBlock(a + b, Domain.TIME)


def add_cp(block, cp_len: int) -> np.ndarray:
    """Prepend the cyclic prefix (copy of the last cp_len samples)."""
    x = _samples(block)
    return np.concatenate([x[..., -cp_len:], x], axis=-1)


def remove_cp(block, cp_len: int) -> np.ndarray:
    x = _samples(block)
    return x[..., cp_len:]


def verify_orthogonality(pilot_freq, ofdm_freq) -> float:
    """|sum_m P[m] X[m]| over the frequency grid; ~0 for complementary bins."""
    p, x = _samples(pilot_freq), _samples(ofdm_freq)
    if p.shape != x.shape:
        raise DimensionMismatch("frequency vectors differ in length")
    return float(np.abs(np.sum(p * x)))


# ---------------------------------------------------------------------------
# Square-QAM with per-axis Gray labelling.  Symbols are unit average power
# before the sqrt(P_data) scaling applied by callers.
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _qam_tables(mod_order: int):
    bpa = int(round(np.log2(mod_order))) // 2
    L = 1 << bpa
    levels = (2 * np.arange(L) - L + 1).astype(np.float64)
    scale = np.sqrt(2.0 * (L * L - 1) / 3.0)
    gray = np.arange(L) ^ (np.arange(L) >> 1)
    inv = np.empty(L, dtype=np.int64)
    inv[gray] = np.arange(L)
    return bpa, L, levels / scale, scale, gray, inv


def qam_modulate(labels, mod_order: int) -> np.ndarray:
    """Map packed Gray labels (I bits high, Q bits low) to QAM symbols."""
    bpa, L, amps, _, _, inv = _qam_tables(mod_order)
    labels = np.asarray(labels)
    vi = inv[(labels >> bpa) & (L - 1)]
    vq = inv[labels & (L - 1)]
    return amps[vi] + 1j * amps[vq]


def qam_demap(symbols, mod_order: int) -> np.ndarray:
    """Nearest-neighbour slicing back to packed Gray labels."""
    bpa, L, amps, scale, gray, _ = _qam_tables(mod_order)
    s = np.asarray(symbols)
    ki = np.clip(np.round((s.real * scale + L - 1) / 2.0), 0, L - 1).astype(np.int64)
    kq = np.clip(np.round((s.imag * scale + L - 1) / 2.0), 0, L - 1).astype(np.int64)
    return (gray[ki] << bpa) | gray[kq]


def random_qam(rng: np.random.Generator, shape, mod_order: int):
    """Draw uniform labels and the matching unit-power symbols."""
    labels = rng.integers(0, mod_order, size=shape, dtype=np.int64)
    return labels, qam_modulate(labels, mod_order)


def _samples(x) -> np.ndarray:
    if isinstance(x, ComplexBlock):
        return x.samples
    return np.asarray(x, dtype=np.complex128)
