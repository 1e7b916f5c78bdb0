import itertools

import numpy as np
import pytest

from risbf.baselines import closed_form_gain, closed_form_single_antenna, random_phase
from risbf.channel import ChannelRealization, ScenarioConfig, generate_dataset
from risbf.objective import channel_gain


def grid_best_gain(ch, levels=16):
    """Exhaustive search over a uniform phase grid (independent oracle)."""
    grid = np.exp(2j * np.pi * np.arange(levels) / levels)
    best = -np.inf
    for combo in itertools.product(grid, repeat=ch.N):
        best = max(best, channel_gain(ch, np.array(combo)))
    return best


def test_alignment_to_real_axis():
    ch = ChannelRealization([[1]], [1j], [1])
    theta = closed_form_single_antenna(ch)
    assert np.allclose(theta, [-1j])
    assert channel_gain(ch, theta) == pytest.approx(4.0)


def test_already_aligned():
    ch = ChannelRealization([[1, 1]], [1, 1], [1])
    theta = closed_form_single_antenna(ch)
    assert np.allclose(theta, [1, 1])
    assert channel_gain(ch, theta) == pytest.approx(9.0)


def test_zero_direct_link_aligns_reflections():
    ch = ChannelRealization([[1, 1j]], [1j, 1], [0])
    theta = closed_form_single_antenna(ch)
    assert channel_gain(ch, theta) == pytest.approx(4.0)


def test_zero_cascaded_element_gets_unit_phase():
    ch = ChannelRealization([[0, 1]], [1, 1], [1j])
    theta = closed_form_single_antenna(ch)
    assert theta[0] == 1
    assert abs(abs(theta[1]) - 1) < 1e-12


def test_rejects_multi_antenna():
    with pytest.raises(ValueError):
        closed_form_single_antenna(ChannelRealization(np.ones((2, 2)), np.ones(2), np.ones(2)))


def test_gain_formula_identity():
    ds = generate_dataset(ScenarioConfig(M=1, N=16), 200, 3)
    for ch in ds:
        theta = closed_form_single_antenna(ch)
        assert channel_gain(ch, theta) == pytest.approx(closed_form_gain(ch), rel=1e-9)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_beats_exhaustive_grid(N):
    ds = generate_dataset(ScenarioConfig(M=1, N=N), 10, 100 + N)
    for ch in ds:
        assert channel_gain(ch, closed_form_single_antenna(ch)) >= grid_best_gain(ch) * (1 - 1e-12)


def test_beats_random_search():
    ch = generate_dataset(ScenarioConfig(M=1, N=4), 1, 8)[0]
    rng = np.random.default_rng(0)
    best = max(channel_gain(ch, random_phase(rng, 4)) for _ in range(10_000))
    assert channel_gain(ch, closed_form_single_antenna(ch)) >= best


def test_random_phase_unit_modulus_and_reproducible():
    theta = random_phase(np.random.default_rng(1), 3)
    assert np.allclose(np.abs(theta), 1, atol=1e-12)
    assert np.array_equal(theta, random_phase(np.random.default_rng(1), 3))
    with pytest.raises(ValueError):
        random_phase(np.random.default_rng(1), 0)


def test_random_phase_zero_mean():
    rng = np.random.default_rng(2)
    draws = random_phase(rng, 100_000)
    assert abs(draws.mean().real) < 0.01 and abs(draws.mean().imag) < 0.01
