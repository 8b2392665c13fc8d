"""Non-coherent multi-device detection and coherent primary equalization.

Detector statistics use the convention CN(0, sigma^2) <=> E|W|^2 = sigma^2,
so a K-bin noise-only energy sum is (sigma^2/2) * chi2 with 2K degrees of
freedom, the threshold for a target false-alarm probability p is

    xi = (sigma^2/2) * Qchi2_{2K}(1 - p),

and under an active reflection the sum is (sigma^2/2) * chi2_{2K}(lambda)
with lambda = sum_k |S[k]|^2 / (sigma^2/2).  The empirical false-alarm
calibration test pins this scaling down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels
from .channel import ChannelRealization, DelayPlan, cluster_bins
from .errors import (
    DimensionMismatch,
    DomainError,
    NumericalFailure,
    OverlapDetected,
    SingularPilot,
)
from .params import ComplexBlock, SystemConfig
from .waveform import afdm_bin_set, daft, qam_demap

QUANTILE_TOL = 1e-12
SERIES_TOL = 1e-14


def chi2_cdf(x, dof: int):
    """Central chi-square CDF via the regularized lower incomplete gamma."""
    if dof < 1:
        raise DomainError("dof must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise DomainError("x must be >= 0")
    out = special.gammainc(dof / 2.0, x / 2.0)
    return float(out) if out.ndim == 0 else out


def chi2_quantile(p: float, dof: int) -> float:
    """Inverse central chi-square CDF by bracketed bisection to 1e-12.

    Seeded with the Wilson-Hilferty cube approximation, then bisected on
    the CDF; deterministic and RNG-free.
    """
    if not 0.0 < p < 1.0:
        raise DomainError("p must be in (0, 1)")
    if dof < 1:
        raise DomainError("dof must be >= 1")
    z = special.ndtri(p)
    c = 2.0 / (9.0 * dof)
    x0 = dof * (1.0 - c + z * math.sqrt(c)) ** 3
    x0 = max(x0, 1e-12)
    lo, hi = x0, x0
    for _ in range(200):
        if chi2_cdf(lo, dof) <= p:
            break
        lo *= 0.5
    for _ in range(200):
        if chi2_cdf(hi, dof) >= p:
            break
        hi *= 2.0
    if chi2_cdf(lo, dof) > p or chi2_cdf(hi, dof) < p:
        raise NumericalFailure("quantile bracket not found")
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        f = chi2_cdf(mid, dof)
        if abs(f - p) < QUANTILE_TOL or (hi - lo) < 1e-15 * max(1.0, mid):
            return mid
        if f < p:
            lo = mid
        else:
            hi = mid
    raise NumericalFailure("chi-square quantile iteration did not converge")


def noncentral_chi2_cdf(x: float, dof: int, lam: float) -> float:
    """Non-central chi-square CDF as a Poisson mixture of central CDFs.

    Sum_j pois(j; lam/2) * F_{dof+2j}(x), evaluated in a window around the
    Poisson mode (log-space weights, so large lam is safe) and truncated
    once the un-accumulated Poisson mass is below 1e-14.
    """
    if dof < 1:
        raise DomainError("dof must be >= 1")
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    if x < 0:
        raise DomainError("x must be >= 0")
    if lam == 0.0:
        return chi2_cdf(x, dof)
    half = lam / 2.0
    # Window sized so the truncated Poisson mass is below 1e-14 analytically
    # (Bernstein tail bound); the float-mass check below is only a safety net
    # against the accumulated rounding of summing many terms.
    width = int(9.0 * math.sqrt(half + 14.0)) + 42
    j_lo = max(0, int(half) - width)
    j_hi = int(half) + width
    j = w = None
    for _ in range(60):
        j = np.arange(j_lo, j_hi + 1, dtype=np.float64)
        logw = special.xlogy(j, half) - half - special.gammaln(j + 1.0)
        w = np.exp(logw)
        deficit = 1.0 - float(w.sum())
        if deficit < max(SERIES_TOL, 64.0 * np.finfo(float).eps * j.size):
            break
        j_lo = max(0, j_lo - width)
        j_hi = j_hi + width
    else:
        raise NumericalFailure("non-central chi-square series did not converge")
    vals = special.gammainc(dof / 2.0 + j, x / 2.0)
    return float(np.dot(w, vals))


@dataclass(frozen=True)
class DetectorCalibration:
    """Frozen threshold for K bins at the configured false-alarm target."""

    sigma2: float
    K: int
    p_fa: float
    xi: float


@dataclass(frozen=True)
class BdObservation:
    z: int
    bin_set: np.ndarray
    energy: float
    threshold: float
    decision: int


def calibrate_threshold(sigma2: float, K: int, p_fa: float) -> DetectorCalibration:
    """Threshold xi with Pr(E > xi | noise only) = p_fa for a K-bin sum."""
    if K < 1:
        raise DomainError("K must be >= 1")
    if not 0.0 < p_fa < 1.0:
        raise DomainError("p_fa must be in (0, 1)")
    if sigma2 <= 0:
        raise DomainError("sigma2 must be positive")
    xi = 0.5 * sigma2 * chi2_quantile(1.0 - p_fa, 2 * K)
    return DetectorCalibration(sigma2=sigma2, K=K, p_fa=p_fa, xi=xi)


def analytical_pmd(lam: float, K: int, p_fa: float) -> float:
    """Missed-detection probability of the K-bin energy detector.

    Evaluates the non-central chi-square CDF at the false-alarm-calibrated
    quantile; strictly decreasing in lam, equal to 1 - p_fa at lam = 0.
    """
    t = chi2_quantile(1.0 - p_fa, 2 * K)
    return noncentral_chi2_cdf(t, 2 * K, lam)


def afdm_demodulate(y_no_cp, cfg: SystemConfig):
    """Affine-domain analysis of a CP-stripped received block."""
    return daft(y_no_cp, cfg)


def all_bin_sets(plan: DelayPlan, chan: ChannelRealization, cfg: SystemConfig) -> np.ndarray:
    """(Z, K) matrix of affine detection bins, one row per device.

    Raises OverlapDetected if any two devices' sets intersect (broken plan).
    """
    ell_fmax = chan.ell_fmax
    rows = [
        cluster_bins(cfg, int(ell) + ell_fmax, chan.fwd_delays[z])
        for z, ell in enumerate(plan.delays)
    ]
    bins = np.asarray(rows, dtype=np.int64).reshape(len(rows), -1)
    flat = bins.ravel()
    if np.unique(flat).size != flat.size:
        raise OverlapDetected("device affine clusters intersect")
    return bins


def bd_bin_set(z: int, plan: DelayPlan, chan: ChannelRealization, cfg: SystemConfig) -> np.ndarray:
    """Affine bins occupied by device z (one per forward tap)."""
    return all_bin_sets(plan, chan, cfg)[z]


def energy_statistic(Y, bins) -> float:
    """Sum of squared magnitudes over a bin set."""
    y = Y.samples if isinstance(Y, ComplexBlock) else np.asarray(Y)
    return float(np.sum(np.abs(y[np.asarray(bins, dtype=np.int64)]) ** 2))


def detect_bits(Y, plan: DelayPlan, chan: ChannelRealization, cal: DetectorCalibration, cfg: SystemConfig):
    """Independent per-device threshold tests (strict >)."""
    bins = all_bin_sets(plan, chan, cfg)
    obs = []
    for z in range(bins.shape[0]):
        e = energy_statistic(Y, bins[z])
        obs.append(
            BdObservation(
                z=z,
                bin_set=bins[z],
                energy=e,
                threshold=cal.xi,
                decision=int(e > cal.xi),
            )
        )
    return obs


# ---------------------------------------------------------------------------
# Coherent primary link
# ---------------------------------------------------------------------------

def estimate_h_eff(y_freq, pilot_freq, cfg: SystemConfig, ell_gate=None):
    """Effective frequency response from the pilot's frequency bins.

    Least-squares per-bin ratios on the M pilot bins are transformed to the
    delay domain (M taps resolve every integer delay below M), optionally
    gated to taps <= ell_gate, and re-expanded to all N bins.  Gating to
    the direct-channel spread removes the device-delay signatures parked in
    the clean CP region, which is what keeps the primary link's equalizer
    blind to backscatter activity.

    Accepts a single frequency block or a (B, N) batch; returns matching
    shape.  Raises SingularPilot if a pilot bin amplitude underflows.
    """
    Y = y_freq.samples if isinstance(y_freq, ComplexBlock) else np.asarray(y_freq)
    P = pilot_freq.samples if isinstance(pilot_freq, ComplexBlock) else np.asarray(pilot_freq)
    single = Y.ndim == 1
    Yb = Y[None, :] if single else Y
    bins = afdm_bin_set(cfg)
    Pb = P[bins]
    if np.any(np.abs(Pb) < 1e-300):
        raise SingularPilot("pilot bin amplitude underflows")
    ratio = Yb[:, bins] / Pb[None, :]

    M, N = cfg.m_chirp, cfg.n_fft
    m0 = int(bins[0])
    taps = np.fft.ifft(ratio, axis=1)
    taps = taps * np.exp(2j * np.pi * m0 * np.arange(M) / N)[None, :]
    gate = M - 1 if ell_gate is None else int(ell_gate)
    if gate < M - 1:
        taps[:, gate + 1 :] = 0.0
    ells = np.arange(M)
    basis = np.exp(-2j * np.pi * np.outer(ells, np.arange(N)) / N)
    H = taps @ basis
    return H[0] if single else H


def ofdm_equalize_demap(y_no_cp, h_eff, cfg: SystemConfig, ref_labels=None):
    """Per-bin equalization and Gray-QAM demapping of the data subcarriers.

    Returns (labels_hat, symbols_hat, bit_errors, n_bits, n_erasures);
    bit_errors is None when no reference labels are given.  Bins whose
    estimated gain underflows are skipped and their bits counted as
    erasures (and as errors, conservatively).
    """
    y = y_no_cp.samples if isinstance(y_no_cp, ComplexBlock) else np.asarray(y_no_cp)
    if y.shape[-1] != cfg.n_fft:
        raise DimensionMismatch("expected a CP-stripped block of length n_fft")
    Yf = np.fft.fft(y, norm="ortho", axis=-1)
    data_bins = np.setdiff1d(np.arange(cfg.n_fft), afdm_bin_set(cfg))
    H = np.asarray(h_eff)
    Hd = H[..., data_bins]
    good = np.abs(Hd) > 1e-300
    Shat = np.where(good, Yf[..., data_bins] / np.where(good, Hd, 1.0), 0.0)
    Shat = Shat / math.sqrt(cfg.p_data)
    labels = qam_demap(Shat, cfg.mod_order)
    n_erase = int(np.size(good) - np.count_nonzero(good))
    bits_per = cfg.bits_per_symbol
    n_bits = labels.size * bits_per
    errors = None
    if ref_labels is not None:
        ref = np.asarray(ref_labels, dtype=np.int64).reshape(labels.reshape(-1, labels.shape[-1]).shape)
        lab2 = labels.reshape(ref.shape)
        errors = int(_kernels.gray_bit_errors(ref, lab2, bits_per).sum())
        if n_erase:
            errors += n_erase * bits_per
    return labels, Shat, errors, n_bits, n_erase
