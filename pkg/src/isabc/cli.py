"""Command line front end: sweep runner, one-off points, self test.

    isabc-sim run --config cfg.txt --sweep sweep.txt --out results.csv --seed 7 --workers 4
    isabc-sim point --snr-db 25 --alpha 1.0 --trials 20000
    isabc-sim selftest
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .params import load_config
from .simharness import default_config, parse_sweep_file, run_point, run_sweep


def _cmd_run(args) -> int:
    base = load_config(args.config) if args.config else default_config()
    spec = parse_sweep_file(
        args.sweep, base=base, out_path=args.out,
        master_seed=args.seed, workers=args.workers,
    )
    path = run_sweep(spec)
    print(f"wrote {path}")
    return 0


def _cmd_point(args) -> int:
    overrides = {}
    if args.snr_db is not None:
        overrides["snr_db"] = args.snr_db
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.p_pilot_db is not None:
        overrides["p_pilot_db"] = args.p_pilot_db
    if args.n_fft is not None:
        overrides["n_fft"] = args.n_fft
        overrides["cp_len"] = args.n_fft // 4
    if args.z is not None:
        overrides["num_bds"] = args.z
    base = load_config(args.config) if args.config else default_config()
    cfg = base.with_updates(**overrides) if overrides else base
    metrics = ("pmd", "pfa", "pmd_analytic", "ber", "rates", "rmse")
    res = run_point(cfg, args.trials, master_seed=args.seed, metrics=metrics)
    print(f"point: snr={cfg.snr_db:.1f} dB  alpha={cfg.alpha}  "
          f"p_pilot={cfg.p_pilot_db} dB  N={cfg.n_fft}  Z={res.z_effective}")
    for name, (val, ci, n) in res.metrics.items():
        print(f"  {name:16s} {val:.6g}   ci99={ci:.3g}   n={n}")
    return 0


def _cmd_selftest(args) -> int:
    """Quick invariant suite: transforms, pilot structure, calibration, planning."""
    from . import waveform as wf
    from .channel import plan_delays, validate_plan
    from .detection import calibrate_threshold

    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        failures += 0 if ok else 1

    cfg = default_config()
    rng = np.random.default_rng(0)
    x = rng.standard_normal(cfg.n_fft) + 1j * rng.standard_normal(cfg.n_fft)
    rt = np.max(np.abs(wf.daft(wf.idaft(x, cfg), cfg).samples - x))
    check(f"transform round-trip (err {rt:.2e})", rt < 1e-10)

    pilot = wf.generate_pilot_time(cfg)
    env = np.abs(pilot.samples)
    check("pilot constant envelope", float(env.max() - env.min()) < 1e-12)
    spec, _ = wf.pilot_to_frequency(pilot, cfg)
    check(f"pilot occupies {spec.afdm_bins.size} bins spaced {cfg.c1_prime}",
          spec.afdm_bins.size == cfg.m_chirp)

    ok = True
    for ell in range(cfg.cp_len):
        Y = wf.daft(np.roll(pilot.samples, ell), cfg).samples
        k = int(np.argmax(np.abs(Y)))
        exp = (cfg.pilot_index + cfg.c1_prime * ell) % cfg.n_fft
        frac = float(np.abs(Y[k]) ** 2 / np.sum(np.abs(Y) ** 2))
        if k != exp or frac < 0.9999:
            ok = False
            break
    check("delay-shift theorem over the CP range", ok)

    cal = calibrate_threshold(1.0, 1, 1e-3)
    w = (rng.standard_normal(200000) + 1j * rng.standard_normal(200000)) / np.sqrt(2)
    pfa = float(np.mean(np.abs(w) ** 2 > cal.xi))
    check(f"false-alarm calibration (pfa {pfa:.2e})", abs(pfa - 1e-3) < 3e-4)

    plan = plan_delays(cfg, 10, 2, 3, 3)
    try:
        validate_plan(plan, cfg, 2, 3)
        check("delay plan valid (delays %s)" % plan.delays.tolist(), True)
    except Exception:
        check("delay plan valid", False)

    print("selftest:", "OK" if failures == 0 else f"{failures} failure(s)")
    return 1 if failures else 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="isabc-sim", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run a sweep file and write a CSV")
    p_run.add_argument("--config", default=None, help="base config file")
    p_run.add_argument("--sweep", required=True, help="sweep definition file")
    p_run.add_argument("--out", required=True, help="output CSV path")
    p_run.add_argument("--seed", type=int, default=None, help="master seed")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.set_defaults(func=_cmd_run)

    p_pt = sub.add_parser("point", help="run a single parameter point")
    p_pt.add_argument("--config", default=None)
    p_pt.add_argument("--snr-db", type=float, default=None)
    p_pt.add_argument("--alpha", type=float, default=None)
    p_pt.add_argument("--p-pilot-db", type=float, default=None)
    p_pt.add_argument("--n-fft", type=int, default=None)
    p_pt.add_argument("--z", type=int, default=None)
    p_pt.add_argument("--trials", type=int, default=10000)
    p_pt.add_argument("--seed", type=int, default=0)
    p_pt.set_defaults(func=_cmd_point)

    p_st = sub.add_parser("selftest", help="run the quick invariant suite")
    p_st.set_defaults(func=_cmd_selftest)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
