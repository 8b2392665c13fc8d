import numpy as np
import pytest

from isabc import waveform as wf
from isabc.channel import (
    BdDevice,
    bd_reflect,
    cluster_bins,
    draw_channel,
    plan_delays,
    propagate,
    validate_plan,
)
from isabc.errors import CapacityExceeded, CpOverflow, InvalidSpread, OverlapDetected
from isabc.simharness import default_config


# ---------------------------------------------------------------- draw_channel

def test_single_tap_is_flat_unit(cfg, rng):
    ch = draw_channel(cfg, D=1, L_f=1, rng=rng)
    assert ch.direct_gains.shape == (1,)
    assert abs(np.abs(ch.direct_gains[0]) - 1.0) < 1e-12


def test_unit_power_normalization(cfg, rng):
    ch = draw_channel(cfg, D=3, L_f=2, rng=rng)
    assert np.sum(np.abs(ch.direct_gains) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.sum(np.abs(ch.fwd_gains) ** 2, axis=1), 1.0, atol=1e-12)


def test_unit_power_monte_carlo_mean(cfg, rng):
    tot = 0.0
    for _ in range(10_000):
        tot += float(np.sum(np.abs(draw_channel(cfg, 3, 1, rng).direct_gains) ** 2))
    assert tot / 10_000 == pytest.approx(1.0, abs=1e-3)


def test_backward_gain_is_rayleigh_unit_mean(cfg, rng):
    g2 = [float(np.mean(np.abs(draw_channel(cfg, 1, 1, rng).bwd_gains) ** 2)) for _ in range(4000)]
    assert np.mean(g2) == pytest.approx(1.0, abs=0.05)


def test_spread_beyond_cp_rejected(cfg, rng):
    with pytest.raises(InvalidSpread):
        draw_channel(cfg, D=cfg.cp_len + 1, L_f=1, rng=rng)


def test_channel_csv(tmp_path, cfg, rng):
    ch = draw_channel(cfg, 2, 1, rng)
    p = tmp_path / "chan.csv"
    ch.to_csv(p)
    head = p.read_text().splitlines()[0]
    assert head == "link,tap,delay,re,im"


# ----------------------------------------------------------------- plan_delays

def test_plan_worked_example(cfg):
    plan = plan_delays(cfg, ell_dmax=10, L_f=2, D=3, Z_requested=3)
    assert plan.delta_min == 4
    assert plan.z_max == 10
    assert plan.delays.tolist() == [14, 18, 22]


def test_delta_min_arithmetic(cfg):
    plan = plan_delays(cfg, ell_dmax=10, L_f=1, D=3, Z_requested=1)
    # delta_tau=1, L_f=1 -> spacing 3; the L_f=0 reading of the rule gives 2
    assert plan.delta_min == cfg.delta_tau + 1 + 1


def test_capacity_exceeded_reports_supported(cfg):
    # the capacity formula allows 10, but the delay ladder wraps onto the
    # direct cluster's affine slots after 4 placements at these parameters
    with pytest.raises(CapacityExceeded) as exc:
        plan_delays(cfg, ell_dmax=10, L_f=2, D=3, Z_requested=11)
    assert exc.value.z_max == 4
    plan = plan_delays(cfg, ell_dmax=10, L_f=2, D=3, Z_requested=exc.value.z_max)
    validate_plan(plan, cfg, 2, 3)
    assert plan.z_max == 10  # formula bound is still reported on the plan


def test_plan_validator_randomized_grid(cfg, rng):
    checked = 0
    attempts = 0
    while checked < 200 and attempts < 2000:
        attempts += 1
        n = int(rng.choice([128, 256, 512]))
        c1p = int(rng.choice([2, 4, 8]))
        c = default_config(n_fft=n, c1_prime=c1p, cp_len=n // 4, pilot_index=1)
        D = int(rng.integers(1, 6))
        L_f = int(rng.integers(1, 4))
        ell_dmax = int(rng.integers(D - 1, min(c.cp_len - 1, D + 12)))
        z_req = int(rng.integers(1, 9))
        try:
            plan = plan_delays(c, ell_dmax, L_f, D, z_req)
        except CapacityExceeded:
            continue
        validate_plan(plan, c, L_f, D)  # raises on any rule violation
        checked += 1
    assert checked == 200


def test_validator_rejects_bad_plans(cfg):
    plan = plan_delays(cfg, ell_dmax=10, L_f=2, D=3, Z_requested=3)
    import dataclasses

    bad = dataclasses.replace(plan, delays=np.array([14, 15]))
    with pytest.raises(OverlapDetected):
        validate_plan(bad, cfg, 2, 3)
    bad2 = dataclasses.replace(plan, delays=np.array([5]))  # inside direct spread
    with pytest.raises(OverlapDetected):
        validate_plan(bad2, cfg, 2, 3)


# ------------------------------------------------------------------ bd_reflect

def test_bit_zero_is_silent(cfg):
    s = wf.add_cp(wf.generate_pilot_time(cfg), cfg.cp_len)
    dev = BdDevice(z=0, ell_bd=5, alpha=1.0)
    out = bd_reflect(s, dev, np.ones(1), np.zeros(1, dtype=int), bit=0, cp_len=cfg.cp_len)
    assert np.all(out == 0)


def test_alpha_zero_is_silent(cfg):
    s = wf.add_cp(wf.generate_pilot_time(cfg), cfg.cp_len)
    dev = BdDevice(z=0, ell_bd=5, alpha=0.0)
    out = bd_reflect(s, dev, np.ones(1), np.zeros(1, dtype=int), bit=1, cp_len=cfg.cp_len)
    assert np.max(np.abs(out)) == 0.0


def test_flat_forward_is_pure_shift(cfg):
    s = wf.add_cp(wf.generate_pilot_time(cfg), cfg.cp_len)
    dev = BdDevice(z=0, ell_bd=5, alpha=1.0)
    out = bd_reflect(s, dev, np.ones(1), np.zeros(1, dtype=int), bit=1, cp_len=cfg.cp_len)
    np.testing.assert_allclose(out[5:], s[:-5], atol=1e-15)
    assert np.all(out[:5] == 0)


def test_cp_overflow_raised(cfg):
    s = wf.add_cp(wf.generate_pilot_time(cfg), cfg.cp_len)
    dev = BdDevice(z=0, ell_bd=cfg.cp_len - 1, alpha=1.0)
    with pytest.raises(CpOverflow):
        bd_reflect(s, dev, np.ones(2), np.arange(2), bit=1, cp_len=cfg.cp_len)


# ------------------------------------------------------------------- propagate

def _flat_channel(cfg, Z=0):
    from isabc.channel import ChannelRealization

    return ChannelRealization(
        direct_gains=np.array([1.0 + 0j]),
        direct_delays=np.array([0]),
        fwd_gains=np.ones((Z, 1), dtype=complex),
        fwd_delays=np.zeros((Z, 1), dtype=int),
        bwd_gains=np.ones(Z, dtype=complex),
        bwd_delays=np.zeros(Z, dtype=int),
    )


def test_identity_channel(cfg, rng):
    s = wf.add_cp(wf.generate_pilot_time(cfg), cfg.cp_len)
    y = propagate(s, [], _flat_channel(cfg), [], 0.0, rng, cfg)
    np.testing.assert_allclose(y, s, atol=1e-15)


def test_all_bits_zero_leaves_direct_only(cfg, rng):
    s = wf.add_cp(wf.generate_pilot_time(cfg), cfg.cp_len)
    ch = _flat_channel(cfg, Z=2)
    devs = [BdDevice(z, 10 + 4 * z, cfg.alpha) for z in range(2)]
    y = propagate(s, devs, ch, [0, 0], 0.0, rng, cfg)
    np.testing.assert_allclose(y, s, atol=1e-15)


def test_noise_variance_monte_carlo(cfg, rng):
    zeros = np.zeros(100_000, dtype=complex)
    y = propagate(zeros, [], _flat_channel(cfg), [], 0.25, rng, cfg)
    assert np.mean(np.abs(y) ** 2) == pytest.approx(0.25, rel=0.01)


def test_linearity_at_zero_noise(cfg, rng):
    s = wf.add_cp(wf.generate_pilot_time(cfg), cfg.cp_len)
    ch = draw_channel(cfg, 3, 2, np.random.default_rng(5))
    devs = [BdDevice(z, 10 + 4 * z, cfg.alpha) for z in range(cfg.num_bds)]
    y1 = propagate(s, devs, ch, [1, 1, 0], 0.0, rng, cfg)
    y2 = propagate(3.0 * s, devs, ch, [1, 1, 0], 0.0, rng, cfg)
    np.testing.assert_allclose(y2, 3.0 * y1, rtol=1e-12)


def test_planned_clusters_disjoint_at_zero_noise(cfg, rng):
    # each device's isolated contribution lands on its own affine bins
    plan = plan_delays(cfg, ell_dmax=2, L_f=2, D=3, Z_requested=3)
    ch = draw_channel(cfg, 3, 2, np.random.default_rng(9))
    pilot_cp = wf.add_cp(wf.generate_pilot_time(cfg), cfg.cp_len)
    occupied = []
    for z in range(3):
        dev = BdDevice(z, int(plan.delays[z]), cfg.alpha)
        xz = bd_reflect(pilot_cp, dev, ch.fwd_gains[z], ch.fwd_delays[z], 1, cfg.cp_len)
        Y = wf.daft(xz[cfg.cp_len:], cfg).samples
        bins = set(np.nonzero(np.abs(Y) > 1e-9)[0].tolist())
        expected = set(cluster_bins(cfg, int(plan.delays[z]) + ch.ell_fmax, ch.fwd_delays[z]).tolist())
        assert bins == expected
        occupied.append(bins)
    assert not (occupied[0] & occupied[1] or occupied[0] & occupied[2] or occupied[1] & occupied[2])
