"""Closed-form optimum for a single-antenna AP and the random-phase baseline."""

from __future__ import annotations

import numpy as np

from .channel import ChannelRealization
from .objective import normalize_phase


def closed_form_single_antenna(ch: ChannelRealization) -> np.ndarray:
    """Align every reflected path with the direct path.

    With ``M = 1`` the received amplitude is ``|sum_n g_n h_rn theta_n + h_d|``,
    which is maximized by ``theta_n = Norm(h_d / (g_n h_rn))``.  If ``h_d`` is
    zero the reflected paths are aligned to phase 0 instead, and an element
    with a zero cascaded coefficient gets ``theta_n = 1``.
    """
    if ch.M != 1:
        raise ValueError(f"closed-form solution requires M = 1, got M = {ch.M}")
    c = ch.G[0] * ch.h_r
    h_d = ch.h_d[0]
    # Norm(h_d / c) has the phase of h_d * conj(c)
    ref = h_d if h_d != 0 else 1.0
    return normalize_phase(ref * c.conj())


def closed_form_gain(ch: ChannelRealization) -> float:
    if ch.M != 1:
        raise ValueError("closed-form gain requires M = 1")
    return float((np.sum(np.abs(ch.G[0] * ch.h_r)) + abs(ch.h_d[0])) ** 2)


def random_phase(rng: np.random.Generator, N: int) -> np.ndarray:
    if N < 1:
        raise ValueError("N must be at least 1")
    return np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=N))
