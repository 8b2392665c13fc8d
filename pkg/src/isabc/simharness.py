"""Deterministic Monte-Carlo experiment engine.

Trials are processed in fixed-size batches; the RNG stream of batch j of
point p is derived from SeedSequence(master_seed, spawn_key=(p, j)), so
results are invariant to the worker count and reruns are byte-identical.
One trial = one unified block: QAM payload + chirp pilot through the
direct multipath, device reflections per their planned delays, affine
energy detection, delay-gated equalization, and (when requested) a
monostatic sensing snapshot.

The devices re-radiate the pilot component only (narrowband reflector
model) unless ``bd_reflects_composite`` is set; the backscatter cascade
carries the ``bd_gain_db`` budget and the Rayleigh backward gain.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _sstats

from . import _kernels
from .channel import plan_delays, DelayPlan
from .detection import calibrate_threshold, estimate_h_eff
from .errors import CapacityExceeded, InvalidValue, ResumeMismatch
from .metrics import RateReport
from .params import SystemConfig, parse_config_text, validate_config
from .waveform import generate_pilot_time, ofdm_bin_set, qam_demap, qam_modulate

CSV_HEADER = [
    "point_id", "param_name", "param_value", "snr_db", "alpha", "p_pilot_db",
    "n", "z", "metric", "value", "ci99", "trials", "seed",
]

DEFAULT_METRICS = ("pmd", "pfa", "pmd_analytic", "ber", "rates")
BATCH_SIZE = 4096
ERROR_ABORT_FRACTION = 0.01


def default_config(**overrides) -> SystemConfig:
    """Reference setup: 4-QAM, N=256, c1'=8, CP=N/4, pilot index 1, P_FA=1e-3."""
    raw = {
        "n_fft": 256,
        "c1_prime": 8,
        "pilot_index": 1,
        "cp_len": 64,
        "mod_order": 4,
        "alpha": 1.0,
        "p_fa_target": 1e-3,
    }
    raw.update(overrides)
    return validate_config(raw)


@dataclass
class TrialRecord:
    seed: int
    point_id: str
    trial_index: int
    bits: np.ndarray
    decisions: np.ndarray
    energies: np.ndarray
    lam: np.ndarray
    xi: float
    bit_errors: int
    n_bits: int
    tau_true_s: np.ndarray
    tau_hat_s: np.ndarray
    wall_time: float


@dataclass
class PointResult:
    point_id: str
    cfg: SystemConfig
    z_effective: int
    trials: int
    metrics: dict
    errors: int = 0
    records: list = field(default_factory=list)
    rate_report: RateReport | None = None


@dataclass
class SweepSpec:
    base: SystemConfig
    sweep: dict
    trials: int
    master_seed: int
    out_path: str
    metrics: tuple = DEFAULT_METRICS
    fixed_total_power: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidValue("trials", "must be >= 1")
        for key, vals in self.sweep.items():
            if not len(vals):
                raise InvalidValue(key, "empty sweep value list")


def _batch_rng(master_seed: int, point_index: int, batch_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(point_index, batch_index))
    return np.random.default_rng(ss)


def _plan_or_truncate(cfg: SystemConfig):
    """Plan device delays, truncating to capacity when oversubscribed."""
    D, Lf, Z = cfg.direct_taps, cfg.forward_taps, cfg.num_bds
    ell_dmax = D - 1
    if Z == 0:
        return DelayPlan(np.zeros(0, dtype=np.int64), cfg.delta_tau + Lf + 1, 0, ell_dmax), 0
    try:
        plan = plan_delays(cfg, ell_dmax, Lf, D, Z)
    except CapacityExceeded as exc:
        if exc.z_max == 0:
            return DelayPlan(np.zeros(0, dtype=np.int64), cfg.delta_tau + Lf + 1, 0, ell_dmax), 0
        plan = plan_delays(cfg, ell_dmax, Lf, D, exc.z_max)
    return plan, int(plan.delays.size)


class _PointEngine:
    """Precomputed per-point state shared by every batch."""

    def __init__(self, cfg: SystemConfig, metrics):
        self.cfg = cfg
        self.metrics = set(metrics)
        self.plan, self.z = _plan_or_truncate(cfg)
        N, cp = cfg.n_fft, cfg.cp_len
        self.pilot = generate_pilot_time(cfg).samples
        self.pilot_cp = np.concatenate([self.pilot[-cp:], self.pilot])
        self.pilot_freq = np.fft.fft(self.pilot, norm="ortho")
        self.data_bins = ofdm_bin_set(cfg)
        self.chirp_conj = np.exp(2j * np.pi * cfg.c1 * np.arange(N) ** 2)
        m = np.arange(N)
        self.c2_conj = np.exp(2j * np.pi * cfg.c2 * m * m)
        D, Lf = cfg.direct_taps, cfg.forward_taps
        self.pdp_d = np.exp(-np.arange(D) / cfg.pdp_decay)
        self.pdp_d /= self.pdp_d.sum()
        self.pdp_f = np.exp(-np.arange(Lf) / cfg.pdp_decay)
        self.pdp_f /= self.pdp_f.sum()
        self.direct_delays = np.arange(D, dtype=np.int64)
        self.fwd_delays = np.arange(Lf, dtype=np.int64)
        self.ell_fmax = Lf - 1
        if self.z:
            offs = [
                int(f + self.ell_fmax + ell)
                for ell in self.plan.delays
                for f in self.fwd_delays
            ]
            self.bd_offsets = np.asarray(offs, dtype=np.int64)
            rows = [
                (cfg.pilot_index + cfg.c1_prime * (int(ell) + self.ell_fmax + self.fwd_delays)) % N
                for ell in self.plan.delays
            ]
            self.bins = np.asarray(rows, dtype=np.int64)
        else:
            self.bd_offsets = np.zeros(0, dtype=np.int64)
            self.bins = np.zeros((0, Lf), dtype=np.int64)
        self.cal = calibrate_threshold(cfg.noise_var, Lf, cfg.p_fa_target)
        self.gate = None if cfg.bd_reflects_composite else D - 1
        self.sense_grid = min(cfg.m_chirp, cp)
        self.w_bd = cfg.bandwidth_hz * (Lf * cfg.c1_prime) / N

    def run_batch(self, B: int, rng: np.random.Generator, keep: int, point_id: str, seed: int, base_trial: int):
        cfg = self.cfg
        N, cp, Z, D, Lf = cfg.n_fft, cfg.cp_len, self.z, cfg.direct_taps, cfg.forward_taps
        sig2 = cfg.noise_var
        out = {}

        labels = rng.integers(0, cfg.mod_order, size=(B, self.data_bins.size), dtype=np.int64)
        syms = qam_modulate(labels, cfg.mod_order)
        X = np.zeros((B, N), dtype=np.complex128)
        X[:, self.data_bins] = syms * math.sqrt(cfg.p_data)
        s_ofdm = np.fft.ifft(X, norm="ortho", axis=1)
        comp = s_ofdm + self.pilot[None, :]
        s_cp = np.concatenate([comp[:, -cp:], comp], axis=1)

        hd = (rng.standard_normal((B, D)) + 1j * rng.standard_normal((B, D))) * np.sqrt(self.pdp_d / 2.0)
        hd /= np.linalg.norm(hd, axis=1, keepdims=True)
        hf = (rng.standard_normal((B, Z, Lf)) + 1j * rng.standard_normal((B, Z, Lf))) * np.sqrt(self.pdp_f / 2.0)
        if Z:
            hf /= np.linalg.norm(hf, axis=2, keepdims=True)
        hb = (rng.standard_normal((B, Z)) + 1j * rng.standard_normal((B, Z))) / math.sqrt(2.0)
        bits = rng.integers(0, 2, size=(B, Z), dtype=np.int64)

        y = np.zeros_like(s_cp)
        _kernels.scatter_taps(y, s_cp, hd.astype(np.complex128), self.direct_delays)
        if Z:
            coeffs = (bits * cfg.alpha * cfg.bd_gain * hb)[:, :, None] * hf
            coeffs = coeffs.reshape(B, Z * Lf)
            if cfg.bd_reflects_composite:
                _kernels.scatter_taps(y, s_cp, coeffs, self.bd_offsets)
            else:
                _kernels.scatter_taps_shared(y, self.pilot_cp, coeffs, self.bd_offsets)
        if sig2 > 0:
            y += (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)) * math.sqrt(sig2 / 2.0)
        yn = y[:, cp:]

        # affine-domain energy detection
        lam = np.zeros((B, Z))
        energies = np.zeros((B, Z))
        dec = np.zeros((B, Z), dtype=bool)
        if Z:
            Ya = np.fft.fft(yn * self.chirp_conj[None, :], norm="ortho", axis=1) * np.conj(self.c2_conj)[None, :]
            energies = _kernels.cluster_energies(np.abs(Ya) ** 2, self.bins)
            dec = energies > self.cal.xi
            sig_amp2 = (cfg.alpha * cfg.bd_gain) ** 2 * cfg.p_pilot * np.abs(hb) ** 2 * np.sum(np.abs(hf) ** 2, axis=2)
            lam = 2.0 * sig_amp2 / sig2
            out["n_bit1"] = int(np.sum(bits == 1))
            out["n_miss"] = int(np.sum((bits == 1) & ~dec))
            out["n_bit0"] = int(np.sum(bits == 0))
            out["n_fa"] = int(np.sum((bits == 0) & dec))
            if "pmd_analytic" in self.metrics:
                t = 2.0 * self.cal.xi / sig2
                on = lam[bits == 1]
                out["sum_pmd_an"] = float(np.sum(_sstats.ncx2.cdf(t, 2 * Lf, on)))
                out["n_pmd_an"] = int(on.size)
            if "rates" in self.metrics:
                sig_on = np.where(bits == 1, sig_amp2, 0.0)
                out["sum_sig"] = sig_on.sum(axis=0)
                out["n_sig"] = (bits == 1).sum(axis=0)

        bit_errs_v = np.zeros(B, dtype=np.int64)
        if "ber" in self.metrics or "rates" in self.metrics:
            Yf = np.fft.fft(yn, norm="ortho", axis=1)
            H = estimate_h_eff(Yf, self.pilot_freq, cfg, ell_gate=self.gate)
            Hd = H[:, self.data_bins]
            Shat = Yf[:, self.data_bins] / Hd / math.sqrt(cfg.p_data)
            rx_labels = qam_demap(Shat, cfg.mod_order)
            bit_errs_v = _kernels.gray_bit_errors(labels, rx_labels, cfg.bits_per_symbol)
            out["bit_errors"] = int(bit_errs_v.sum())
            out["n_bits"] = int(labels.size * cfg.bits_per_symbol)
            if "rates" in self.metrics:
                err = Shat - syms
                out["sum_S2"] = float(np.sum(np.abs(Shat) ** 2))
                out["sum_err"] = complex(np.sum(err))
                out["sum_err2"] = float(np.sum(np.abs(err) ** 2))
                out["n_sym"] = int(err.size)

        tau_true = np.zeros((B, Z)); tau_hat = np.zeros((B, Z))
        if "rmse" in self.metrics and Z:
            tau_true = np.sort(
                rng.random((B, self.sense_grid)).argsort(axis=1)[:, :Z], axis=1
            ).astype(np.int64)
            ys = np.zeros((B, cp + N), dtype=np.complex128)
            _scatter_var_delays(ys, self.pilot_cp, cfg.alpha, tau_true)
            if sig2 > 0:
                ys += (rng.standard_normal(ys.shape) + 1j * rng.standard_normal(ys.shape)) * math.sqrt(sig2 / 2.0)
            d = ys[:, cp:] * np.conj(self.pilot)[None, :] / np.abs(self.pilot)[None, :]
            F = np.abs(np.fft.fft(d, axis=1))
            picks = _kernels.greedy_peaks(F, Z, cfg.c1_prime)
            picks.sort(axis=1)
            tau_hat = picks / cfg.c1_prime
            err_s = (tau_hat - tau_true) / cfg.sample_rate_hz
            out["sum_tau_err2"] = float(np.sum(err_s ** 2))
            out["n_sens"] = int(err_s.size)

        if keep:
            out["records"] = [
                TrialRecord(
                    seed=seed, point_id=point_id, trial_index=base_trial + i,
                    bits=bits[i].copy(), decisions=dec[i].astype(np.int64),
                    energies=energies[i].copy(), lam=lam[i].copy(), xi=self.cal.xi,
                    bit_errors=int(bit_errs_v[i]), n_bits=int(self.data_bins.size * cfg.bits_per_symbol),
                    tau_true_s=tau_true[i] / cfg.sample_rate_hz, tau_hat_s=tau_hat[i] / cfg.sample_rate_hz,
                    wall_time=time.time(),
                )
                for i in range(min(keep, B))
            ]
        return out


def _scatter_var_delays(out, base, alpha, delays):
    """out[b, d:] += alpha * base[:-d] with per-trial integer delays."""
    L = base.shape[0]
    for d in np.unique(delays):
        mask_rows, mask_cols = np.nonzero(delays == d)
        d = int(d)
        if d == 0:
            out[mask_rows] += alpha * base[None, :]
        else:
            out[mask_rows, d:] += alpha * base[None, : L - d]
    return out


def _binomial_ci99(k: int, n: int):
    if n == 0:
        return float("nan"), float("nan")
    p = k / n
    if k == 0:
        return 0.0, 1.0 - 0.01 ** (1.0 / n)  # 99% upper bound for a zero count
    return p, 2.576 * math.sqrt(p * (1.0 - p) / n)


def run_point(
    cfg: SystemConfig,
    trials: int,
    master_seed: int = 0,
    point_index: int = 0,
    point_id: str = "point0000",
    metrics=DEFAULT_METRICS,
    batch_size: int = BATCH_SIZE,
    keep_records: int = 0,
) -> PointResult:
    """Run one parameter point and aggregate its metrics.

    Aggregation is an ordered reduction over batch index, so the result is
    independent of scheduling.  Per-batch failures are counted and the
    point aborts if more than 1% of trials error out.
    """
    if trials < 1:
        raise InvalidValue("trials", "must be >= 1")
    eng = _PointEngine(cfg, metrics)
    sums: dict = {}
    records: list = []
    errored = 0
    done = 0
    batch_index = 0
    while done < trials:
        B = min(batch_size, trials - done)
        rng = _batch_rng(master_seed, point_index, batch_index)
        want = max(0, min(keep_records - len(records), B))
        try:
            part = eng.run_batch(B, rng, want, point_id, master_seed, done)
            records.extend(part.pop("records", []))
            for k, v in part.items():
                sums[k] = sums.get(k, 0) + v
        except Exception:
            errored += B
            if errored > ERROR_ABORT_FRACTION * trials:
                raise
        done += B
        batch_index += 1

    m: dict = {}
    sig2 = cfg.noise_var
    if "pmd" in eng.metrics and eng.z:
        v, ci = _binomial_ci99(sums.get("n_miss", 0), sums.get("n_bit1", 0))
        m["pmd"] = (v, ci, sums.get("n_bit1", 0))
    if "pfa" in eng.metrics and eng.z:
        v, ci = _binomial_ci99(sums.get("n_fa", 0), sums.get("n_bit0", 0))
        m["pfa"] = (v, ci, sums.get("n_bit0", 0))
    if "pmd_analytic" in eng.metrics and eng.z and sums.get("n_pmd_an"):
        m["pmd_analytic"] = (sums["sum_pmd_an"] / sums["n_pmd_an"], 0.0, sums["n_pmd_an"])
    if "ber" in eng.metrics and sums.get("n_bits"):
        v, ci = _binomial_ci99(sums.get("bit_errors", 0), sums["n_bits"])
        m["ber"] = (v, ci, sums["n_bits"])
    rate_report = None
    if "rates" in eng.metrics and sums.get("n_sym"):
        n = sums["n_sym"]
        mean_err = sums["sum_err"] / n
        var = sums["sum_err2"] / n - abs(mean_err) ** 2
        gamma_p = (sums["sum_S2"] / n) / var if var > 0 else math.inf
        if eng.z:
            sig_mean = sums["sum_sig"] / np.maximum(sums["n_sig"], 1)
        else:
            sig_mean = np.zeros(0)
        rate_report = RateReport.build(gamma_p, sig_mean, sig2, cfg.bandwidth_hz, eng.w_bd)
        m["gamma_p_db"] = (10.0 * math.log10(gamma_p) if np.isfinite(gamma_p) else math.inf, 0.0, n)
        m["r_primary_bps"] = (rate_report.r_primary_bps, 0.0, n)
        m["r_bd_total_bps"] = (float(np.sum(rate_report.r_bd_bps)), 0.0, n)
        m["r_sum_bps"] = (rate_report.r_sum_bps, 0.0, n)
    if "rmse" in eng.metrics and sums.get("n_sens"):
        n = sums["n_sens"]
        mse_tau = sums["sum_tau_err2"] / n
        rmse_tau = math.sqrt(mse_tau)
        rmse_r = 299_792_458.0 * rmse_tau  # bistatic range mapping
        m["rmse_tau_s"] = (rmse_tau, 0.0, n)
        m["rmse_m"] = (rmse_r, 0.0, n)
        m["gamma_rmse_db"] = (10.0 * math.log10(cfg.p_pilot / sig2), 0.0, n)
    m["eta_db"] = (cfg.p_pilot_db - cfg.p_data_db, 0.0, trials)
    return PointResult(
        point_id=point_id, cfg=cfg, z_effective=eng.z, trials=trials,
        metrics=m, errors=errored, records=records, rate_report=rate_report,
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

_PARAM_ALIASES = {"z": "num_bds", "n": "n_fft"}


def _apply_point_params(base: SystemConfig, assignment: dict, fixed_total_power: bool) -> SystemConfig:
    upd = {}
    for key, value in assignment.items():
        key = _PARAM_ALIASES.get(key, key)
        if key == "eta_db":
            if not fixed_total_power:
                upd["p_pilot_db"] = base.p_data_db + value
                continue
            n_data = base.n_fft - base.m_chirp
            e_tot = base.p_pilot + n_data * base.p_data
            eta = 10.0 ** (value / 10.0)
            p_data = e_tot / (eta + n_data)
            upd["p_data_db"] = 10.0 * math.log10(p_data)
            upd["p_pilot_db"] = 10.0 * math.log10(eta * p_data)
        else:
            upd[key] = value
    if "n_fft" in upd and "cp_len" not in upd:
        upd["cp_len"] = int(upd["n_fft"]) // 4  # keep the CP at N/4 when sweeping N
    return base.with_updates(**upd)


def sweep_points(spec: SweepSpec):
    """Enumerate (point_index, point_id, assignment, cfg) for a sweep."""
    keys = list(spec.sweep.keys())
    combos = list(itertools.product(*[spec.sweep[k] for k in keys]))
    for idx, combo in enumerate(combos):
        assignment = dict(zip(keys, combo))
        cfg = _apply_point_params(spec.base, assignment, spec.fixed_total_power)
        yield idx, f"p{idx:04d}", assignment, cfg


def _point_rows(spec: SweepSpec, idx, pid, assignment, res: PointResult):
    name = ",".join(assignment.keys()) if assignment else ""
    value = ",".join(_fmt(v) for v in assignment.values()) if assignment else ""
    rows = []
    for metric, (val, ci, n) in res.metrics.items():
        rows.append([
            pid, name, value, _fmt(res.cfg.snr_db), _fmt(res.cfg.alpha),
            _fmt(res.cfg.p_pilot_db), res.cfg.n_fft, res.z_effective,
            metric, _fmt(val), _fmt(ci), n, spec.master_seed,
        ])
    return rows


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _run_point_task(args):
    spec_base, assignment, fixed_tp, trials, seed, idx, pid, metrics = args
    cfg = _apply_point_params(spec_base, assignment, fixed_tp)
    return idx, pid, assignment, run_point(
        cfg, trials, master_seed=seed, point_index=idx, point_id=pid, metrics=metrics
    )


def run_sweep(spec: SweepSpec) -> str:
    """Run every point of the sweep, appending rows to the output CSV.

    Completed points found in an existing file are skipped (resume); a
    header mismatch raises ResumeMismatch.  Rows are written in point
    order regardless of the worker count.
    """
    done_ids = set()
    exists = os.path.exists(spec.out_path) and os.path.getsize(spec.out_path) > 0
    if exists:
        with open(spec.out_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != CSV_HEADER:
                raise ResumeMismatch(f"existing file header {header} != {CSV_HEADER}")
            for row in reader:
                done_ids.add(row[0])

    tasks = [
        (spec.base, assignment, spec.fixed_total_power, spec.trials,
         spec.master_seed, idx, pid, spec.metrics)
        for idx, pid, assignment, _ in sweep_points(spec)
        if pid not in done_ids
    ]

    # Points are written (and flushed) in index order as they complete, so
    # an interrupted sweep leaves a valid file that resumes by point id.
    mode = "a" if exists else "w"
    with open(spec.out_path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if not exists:
            writer.writerow(CSV_HEADER)
            fh.flush()

        def emit(idx, pid, assignment, res):
            for row in _point_rows(spec, idx, pid, assignment, res):
                writer.writerow(row)
            fh.flush()

        if spec.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=spec.workers) as pool:
                for idx, pid, assignment, res in pool.map(_run_point_task, tasks):
                    emit(idx, pid, assignment, res)
        else:
            for t in tasks:
                emit(*_run_point_task(t))
    return spec.out_path


# ---------------------------------------------------------------------------
# Sweep file parsing (same key = value grammar as configs; `sweep.<param>`
# keys carry comma-separated value lists and define the point grid).
# ---------------------------------------------------------------------------

def parse_sweep_file(path, base: SystemConfig | None = None, out_path="sweep.csv",
                     master_seed: int | None = None, workers: int = 1) -> SweepSpec:
    with open(path) as fh:
        text = fh.read()
    raw: dict = {}
    sweep: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidValue(f"line {lineno}", "expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key.startswith("sweep."):
            sweep[key[len("sweep."):]] = [_scalar(v) for v in value.split(",")]
        else:
            raw[key] = _scalar(value)
    trials = int(raw.pop("trials", 1000))
    seed = int(raw.pop("seed", 0)) if master_seed is None else master_seed
    metrics = raw.pop("metrics", None)
    metrics = tuple(m.strip() for m in metrics.split(",")) if isinstance(metrics, str) else DEFAULT_METRICS
    fixed_tp = bool(raw.pop("fixed_total_power", False))
    if base is None:
        base = default_config()
    if raw:
        base = base.with_updates(**raw)
    return SweepSpec(
        base=base, sweep=sweep, trials=trials, master_seed=seed,
        out_path=out_path, metrics=metrics, fixed_total_power=fixed_tp, workers=workers,
    )


def _scalar(text):
    return parse_config_text(f"x = {text.strip()}")["x"]
