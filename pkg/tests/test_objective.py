import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from risbf.channel import ChannelRealization, ScenarioConfig, generate_dataset
from risbf.objective import (DegenerateChannelError, batch_gain, beamform, channel_gain,
                             effective_channel, mrt_beamformer, rate, receive_snr)


def random_channel(rng, M, N):
    c = lambda *s: rng.standard_normal(s) + 1j * rng.standard_normal(s)
    return ChannelRealization(c(M, N), c(N), c(M))


def random_theta(rng, N):
    return np.exp(1j * rng.uniform(0, 2 * np.pi, N))


def test_effective_channel_trivial_cases():
    ch = ChannelRealization([[1]], [1], [0])
    assert np.allclose(effective_channel(ch, [1]), [1])
    ch = ChannelRealization([[1]], [1j], [1])
    assert np.allclose(effective_channel(ch, [-1j]), [2])
    assert channel_gain(ch, [-1j]) == pytest.approx(4.0)


def test_effective_channel_matches_matrix_form():
    rng = np.random.default_rng(0)
    ch = random_channel(rng, 2, 3)
    theta = random_theta(rng, 3)
    oracle = ch.G @ np.diag(theta) @ ch.h_r + ch.h_d
    assert np.allclose(effective_channel(ch, theta), oracle, atol=1e-12, rtol=0)
    assert channel_gain(ch, theta) == pytest.approx(np.sum(np.abs(oracle) ** 2), abs=1e-12)


def test_zero_channel_has_zero_gain():
    ch = ChannelRealization(np.zeros((2, 3)), np.ones(3), np.zeros(2))
    assert channel_gain(ch, random_theta(np.random.default_rng(1), 3)) == 0.0


def test_dimension_mismatch():
    ch = ChannelRealization(np.ones((2, 3)), np.ones(3), np.ones(2))
    with pytest.raises(ValueError):
        effective_channel(ch, np.ones(4))


def test_batch_gain_matches_scalar():
    ds = generate_dataset(ScenarioConfig(M=3, N=5), 20, 4)
    theta = np.exp(1j * np.random.default_rng(2).uniform(0, 6.3, (20, 5)))
    expected = [channel_gain(ds[k], theta[k]) for k in range(20)]
    assert np.allclose(batch_gain(ds.G, ds.h_r, ds.h_d, theta), expected, rtol=1e-12)


def test_mrt_scalar_case():
    ch = ChannelRealization([[1]], [1j], [1])
    assert np.allclose(mrt_beamformer(ch, [-1j], 1.0), [1])


def test_mrt_power_and_matched_gain():
    rng = np.random.default_rng(3)
    ch = random_channel(rng, 4, 6)
    theta = random_theta(rng, 6)
    w = mrt_beamformer(ch, theta, 2.5)
    r = effective_channel(ch, theta)
    assert np.vdot(w, w).real == pytest.approx(2.5, abs=1e-12)
    assert abs(r @ w) ** 2 == pytest.approx(2.5 * np.vdot(r, r).real, rel=1e-12)


def test_mrt_beats_random_beamformers():
    rng = np.random.default_rng(4)
    ch = random_channel(rng, 4, 3)
    theta = random_theta(rng, 3)
    r = effective_channel(ch, theta)
    best = abs(r @ mrt_beamformer(ch, theta, 1.0)) ** 2
    for _ in range(1000):
        w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        w /= np.linalg.norm(w)
        assert abs(r @ w) ** 2 <= best + 1e-9


def test_mrt_degenerate_channel():
    ch = ChannelRealization(np.zeros((2, 2)), np.zeros(2), np.zeros(2))
    with pytest.raises(DegenerateChannelError):
        mrt_beamformer(ch, np.ones(2), 1.0)


def test_snr_and_rate_arithmetic():
    ch = ChannelRealization([[1]], [1j], [1])
    cfg = ScenarioConfig(M=1, N=1)
    assert receive_snr(ch, [-1j], cfg) == pytest.approx(40.0)
    assert rate(40.0) == pytest.approx(np.log2(41.0))
    assert rate(0.0) == 0.0
    out = beamform(ch, [-1j], cfg)
    assert out.gain == pytest.approx(4.0) and out.snr == pytest.approx(40.0)
    assert np.vdot(out.w, out.w).real <= cfg.tx_power + 1e-9


def test_snr_gain_ratio():
    rng = np.random.default_rng(5)
    ch = random_channel(rng, 3, 4)
    theta = random_theta(rng, 4)
    cfg = ScenarioConfig(M=3, N=4)
    assert receive_snr(ch, theta, cfg) / channel_gain(ch, theta) == pytest.approx(10.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), M=st.integers(1, 4), N=st.integers(1, 8))
def test_gain_invariant_under_joint_conjugation(seed, M, N):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng, M, N)
    theta = random_theta(rng, N)
    assert channel_gain(ch.conj(), theta.conj()) == pytest.approx(channel_gain(ch, theta), rel=1e-12)


@given(a=st.floats(0, 1e6), b=st.floats(0, 1e6))
def test_rate_monotone(a, b):
    if a < b:
        assert rate(a) < rate(b) or np.isclose(a, b)
