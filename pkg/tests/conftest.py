import numpy as np
import pytest

from isabc.simharness import default_config


@pytest.fixture
def cfg():
    return default_config()


@pytest.fixture
def small_cfg():
    # N=8, c1'=2 keeps the direct O(N^2) oracles cheap
    return default_config(n_fft=8, c1_prime=2, cp_len=2, pilot_index=1,
                          num_bds=0, direct_taps=1, forward_taps=1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
