"""Dechirp-based delay probing and device range estimation.

A reflection delayed by ell samples, multiplied by the conjugate pilot,
becomes a tone at R_t * ell cycles/sample with R_t = c1'/N, so an N-point
FFT puts its peak at bin c1' * ell.  Delay estimation is therefore peak
picking on the dechirped spectrum; with integer delays the estimate is
exact once the peak clears the noise floor, which is what produces the
sharp RMSE collapse versus SNR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .detection import chi2_quantile, noncentral_chi2_cdf
from .errors import DimensionMismatch, DomainError, EmptyInput, NoPathDetected, TooFewPeaks
from .params import ComplexBlock, SystemConfig
from .waveform import generate_pilot_time

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class DelayEstimate:
    peak_bin: int
    tau_samples: float
    tau_seconds: float
    peak_mag: float


@dataclass(frozen=True)
class SensingResult:
    tau_hat_s: np.ndarray
    range_hat_m: np.ndarray
    peak_bins: np.ndarray
    peak_mags: np.ndarray
    rmse_m: float


def dechirp(y_s, pilot) -> np.ndarray:
    """Unit-normalized conjugate multiply: y[n] * conj(p[n]) / |p[n]|."""
    y = y_s.samples if isinstance(y_s, ComplexBlock) else np.asarray(y_s)
    p = pilot.samples if isinstance(pilot, ComplexBlock) else np.asarray(pilot)
    if y.shape[-1] != p.shape[-1]:
        raise DimensionMismatch("received block and pilot differ in length")
    return y * np.conj(p) / np.abs(p)


def estimate_delays(dechirped, cfg: SystemConfig, expected_count: int):
    """Largest well-separated dechirped-spectrum peaks -> delay estimates.

    Peaks must be >= c1' bins apart (ties break toward the lower bin);
    tau_samples = bin / c1' and tau_seconds = tau_samples / sample_rate_hz.
    """
    if expected_count < 1:
        raise DomainError("expected_count must be >= 1")
    x = dechirped.samples if isinstance(dechirped, ComplexBlock) else np.asarray(dechirped)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    F = np.fft.fft(xb, axis=-1)
    mags = np.abs(F)
    if expected_count > cfg.n_fft // cfg.c1_prime:
        raise TooFewPeaks(f"cannot separate {expected_count} peaks at spacing {cfg.c1_prime}")
    picks = _kernels.greedy_peaks(mags, expected_count, cfg.c1_prime)
    if np.any(picks < 0):
        raise TooFewPeaks("not enough separated peaks found")
    results = []
    for b in range(picks.shape[0]):
        row = []
        for k in picks[b]:
            tau_smp = k / cfg.c1_prime
            row.append(
                DelayEstimate(
                    peak_bin=int(k),
                    tau_samples=float(tau_smp),
                    tau_seconds=float(tau_smp / cfg.sample_rate_hz),
                    peak_mag=float(mags[b, k]),
                )
            )
        row.sort(key=lambda e: e.peak_bin)
        results.append(row)
    return results[0] if single else results


def sense_block(y_s, pilot, cfg: SystemConfig, expected_count: int,
                truths_s=None, mode: str = "bistatic") -> SensingResult:
    """One-shot sensing snapshot: dechirp, estimate, map to range.

    When the true delays (seconds) are given, rmse_m is the range RMSE
    under the chosen mapping; otherwise it is NaN.
    """
    ests = estimate_delays(dechirp(y_s, pilot), cfg, expected_count)
    tau = np.array([e.tau_seconds for e in ests])
    rng_m = np.array([to_range(t, mode) for t in tau])
    if truths_s is not None:
        truths = np.sort(np.asarray(truths_s, dtype=np.float64))
        err = rmse(rng_m, np.array([to_range(t, mode) for t in truths]))
    else:
        err = float("nan")
    return SensingResult(
        tau_hat_s=tau,
        range_hat_m=rng_m,
        peak_bins=np.array([e.peak_bin for e in ests]),
        peak_mags=np.array([e.peak_mag for e in ests]),
        rmse_m=err,
    )


def to_range(tau_hat_s: float, mode: str = "monostatic") -> float:
    """Delay -> physical range: c*tau/2 monostatic, c*tau bistatic."""
    if tau_hat_s < 0:
        raise DomainError("tau must be >= 0")
    if mode == "monostatic":
        return SPEED_OF_LIGHT * tau_hat_s / 2.0
    if mode == "bistatic":
        return SPEED_OF_LIGHT * tau_hat_s
    raise DomainError(f"unknown mode {mode!r}")


def rmse(estimates, truths) -> float:
    """Root mean squared error across trials/devices (any common unit)."""
    est = np.asarray(estimates, dtype=np.float64).ravel()
    tru = np.asarray(truths, dtype=np.float64).ravel()
    if est.size == 0:
        raise EmptyInput("no estimates")
    if est.shape != tru.shape:
        raise DimensionMismatch("estimates/truths length mismatch")
    return float(np.sqrt(np.mean((est - tru) ** 2)))


def probe_environment(cfg: SystemConfig, chan, sigma2: float, rng: np.random.Generator):
    """Pilot-only probing of the direct channel's maximum excess delay.

    All devices stay absorptive; the pilot block runs through the direct
    taps plus AWGN, is dechirped, and every delay hypothesis on the grid is
    energy-tested against a chi-square threshold with the false-alarm
    budget Bonferroni-split across the grid.  Returns (ell_dmax_hat,
    confidence) where confidence is the analytic detection probability of
    the weakest reported tap at its measured level.
    """
    N, cp = cfg.n_fft, cfg.cp_len
    pilot = generate_pilot_time(cfg).samples
    block = np.concatenate([pilot[-cp:], pilot])
    y = np.zeros_like(block)
    for g, d in zip(chan.direct_gains, chan.direct_delays):
        d = int(d)
        if d == 0:
            y += g * block
        else:
            y[d:] += g * block[:-d]
    if sigma2 > 0:
        y = y + (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)) * np.sqrt(sigma2 / 2.0)
    d = dechirp(y[cp:], pilot)
    F = np.fft.fft(d)
    grid = np.arange(min(cp, cfg.m_chirp))
    peaks2 = np.abs(F[(cfg.c1_prime * grid) % N]) ** 2
    scale = 0.5 * N * sigma2
    if sigma2 > 0:
        xi = scale * chi2_quantile(1.0 - cfg.p_fa_target / grid.size, 2)
    else:
        xi = 0.0
    # relative floor guards against FFT rounding leakage in the noiseless case
    xi = max(xi, 1e-10 * float(peaks2.max()))
    hits = np.nonzero(peaks2 > xi)[0]
    if hits.size == 0:
        raise NoPathDetected("no delay hypothesis exceeded the probe threshold")
    ell_hat = int(hits.max())
    if sigma2 > 0:
        lam_weak = float(peaks2[hits].min()) / scale
        t = chi2_quantile(1.0 - cfg.p_fa_target / grid.size, 2)
        confidence = 1.0 - noncentral_chi2_cdf(t, 2, lam_weak)
    else:
        confidence = 1.0
    return ell_hat, confidence
