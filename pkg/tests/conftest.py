import numpy as np
import pytest

from ambc import SystemParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_params(**kw) -> SystemParams:
    """Small default scenario; override per test."""
    base = dict(
        m=4, n_str=8, p_pilots=4, t_symbols=16,
        snr_db=10.0, zeta_db=-5.0, noise_power=1.0, seed=99,
    )
    base.update(kw)
    return SystemParams(**base)
