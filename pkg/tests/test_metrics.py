import numpy as np
import pytest

from isabc.errors import DomainError
from isabc.metrics import (
    bd_rate,
    complexity_counters,
    post_equalization_snr,
    power_ratio_eta,
    primary_rate,
)
from isabc.simharness import default_config


def test_bd_rate_trivial_points():
    assert bd_rate(0.0, 1.0, 1e6) == 0.0
    assert bd_rate(1.0, 1.0, 1e6) == pytest.approx(1e6)
    with pytest.raises(DomainError):
        bd_rate(1.0, 0.0, 1e6)


def test_primary_rate_trivial_points():
    assert primary_rate(0.0, 1e6) == 0.0
    assert primary_rate(3.0, 1e6) == pytest.approx(2e6)
    with pytest.raises(DomainError):
        primary_rate(-1.0, 1e6)


def test_rates_monotone_in_snr():
    rs = [bd_rate(s, 1.0, 1e6) for s in (0.1, 1.0, 10.0, 100.0)]
    assert all(a < b for a, b in zip(rs, rs[1:]))


def test_power_ratio_eta():
    assert power_ratio_eta(2.0, 2.0) == pytest.approx(0.0)
    assert power_ratio_eta(10.0, 1.0) == pytest.approx(10.0)
    eta, grmse = power_ratio_eta(10.0, 1.0, noise_var=0.1)
    assert grmse == pytest.approx(20.0)


def test_post_equalization_snr_scaling(rng):
    s = np.exp(2j * np.pi * rng.random(20000))
    noise = (rng.standard_normal(20000) + 1j * rng.standard_normal(20000)) * np.sqrt(0.005)
    got = post_equalization_snr(s + noise, s)
    assert got == pytest.approx(1.01 / 0.01, rel=0.1)  # mean|S|^2 ~ 1+sigma^2, var ~ sigma^2


def test_complexity_counts_linear_in_z():
    cfg = default_config()
    r0 = complexity_counters(cfg, 0, grid=(256, 512))
    r8 = complexity_counters(cfg, 8, grid=(256, 512))
    assert r0.bd_switch_ops == 0
    assert r8.bd_switch_ops == 8
    assert r0.transforms_per_block == 2
