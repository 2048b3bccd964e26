"""Shared fixtures for the HomodyneQKD test suite."""
import math

import numpy as np
import pytest

from app.schemas.schemas import AliceConfig, BobConfig, ChannelConfig, ChannelMode


def three_se_mean(samples) -> float:
    """Three standard errors of the sample mean."""
    samples = np.asarray(samples)
    return 3.0 * float(np.std(samples, ddof=1)) / math.sqrt(samples.size)


def three_se_proportion(p: float, n: int) -> float:
    return 3.0 * math.sqrt(p * (1.0 - p) / n)


@pytest.fixture
def rng():
    return np.random.default_rng(20060601)


@pytest.fixture
def ideal_channel():
    """Lossless, drift-free, perfectly aligned two-fiber link."""
    return ChannelConfig(mode=ChannelMode.TWO_FIBER, length_km=0.0, linewidth_hz=0.0)


@pytest.fixture
def ideal_bob():
    return BobConfig(eta_det=1.0, electronic_noise=0.0, threshold_q0=0.0)


@pytest.fixture
def make_alice():
    def _make(mu_signal: float = 1.0, mu_reference=None) -> AliceConfig:
        return AliceConfig(mu_signal=mu_signal, mu_reference=mu_reference)
    return _make


@pytest.fixture
def tmp_out(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    return out
