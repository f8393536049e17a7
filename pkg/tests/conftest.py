import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the dense_gp test oracle

GWEI = 10**9


def make_two_regime_series(flat_len=500, ramp_len=100, seed=20260823):
    """Declining noisy plateau, then a 5x exponential ramp.

    The plateau drives a trailing-window percentile oracle's success rate
    toward 1 (prices keep sinking below old quotes); the ramp collapses it
    toward 0 (quotes lag the climb).
    """
    rng = np.random.default_rng(seed)
    flat = np.linspace(150.0, 90.0, flat_len) + rng.normal(0.0, 1.5, flat_len)
    ramp = 90.0 * 5.0 ** (np.arange(1, ramp_len + 1) / ramp_len)
    ramp = ramp + rng.normal(0.0, 1.5, ramp_len)
    return [int(round(v * GWEI)) for v in np.concatenate([flat, ramp])]


@pytest.fixture(scope="session")
def two_regime_series():
    return make_two_regime_series()


@pytest.fixture(scope="session")
def iid_series():
    """Large i.i.d. price series for calibration checks (10,200 blocks)."""
    rng = np.random.default_rng(42)
    return [int(v) for v in rng.integers(10**10, 10**11, size=10_200)]
