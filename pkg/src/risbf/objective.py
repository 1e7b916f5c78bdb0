"""Effective channel, channel gain, MRT beamformer, SNR and rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, ScenarioConfig

UNIT_MODULUS_TOL = 1e-9


class DegenerateChannelError(ValueError):
    """Raised when the effective channel is identically zero."""


@dataclass(frozen=True)
class BeamformerOutput:
    w: np.ndarray
    gain: float
    snr: float
    rate: float


def is_unit_modulus(theta, tol: float = UNIT_MODULUS_TOL) -> bool:
    return bool(np.all(np.abs(np.abs(np.asarray(theta)) - 1.0) <= tol))


def normalize_phase(z, fallback: complex = 1.0) -> np.ndarray:
    """Element-wise ``z / |z|``; zero entries map to ``fallback``."""
    z = np.asarray(z, dtype=complex)
    mag = np.abs(z)
    out = np.full(z.shape, fallback, dtype=complex)
    nz = mag > 0
    out[nz] = z[nz] / mag[nz]
    return out


def _check_theta(ch: ChannelRealization, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=complex).reshape(-1)
    if theta.size != ch.N:
        raise ValueError(f"theta has {theta.size} entries, channel has N={ch.N}")
    return theta


def effective_channel(ch: ChannelRealization, theta) -> np.ndarray:
    """r = G diag(theta) h_r + h_d."""
    theta = _check_theta(ch, theta)
    return ch.G @ (ch.h_r * theta) + ch.h_d


def channel_gain(ch: ChannelRealization, theta) -> float:
    r = effective_channel(ch, theta)
    return float(np.vdot(r, r).real)


def cascaded(G: np.ndarray, h_r: np.ndarray) -> np.ndarray:
    """Per-element cascaded coefficients c[..., i, n] = G[..., i, n] h_r[..., n]."""
    return G * h_r[..., None, :]


def batch_gain(G: np.ndarray, h_r: np.ndarray, h_d: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Channel gain for stacked realizations, shapes (K,M,N), (K,N), (K,M), (K,N)."""
    r = np.einsum("kmn,kn->km", G, h_r * theta) + h_d
    return np.sum(np.abs(r) ** 2, axis=-1)


def mrt_beamformer(ch: ChannelRealization, theta, p: float) -> np.ndarray:
    """Maximum-ratio transmit vector ``w`` with ``w^T = sqrt(p) r^H / ||r||``."""
    r = effective_channel(ch, theta)
    norm = np.linalg.norm(r)
    if norm == 0:
        raise DegenerateChannelError("effective channel is zero; MRT undefined")
    return np.sqrt(p) * r.conj() / norm


def receive_snr(ch: ChannelRealization, theta, config: ScenarioConfig) -> float:
    w = mrt_beamformer(ch, theta, config.tx_power)
    r = effective_channel(ch, theta)
    return float(abs(r @ w) ** 2 / config.sigma2)


def rate(snr):
    """Spectral efficiency log2(1 + snr) in bits/s/Hz."""
    return np.log2(1.0 + np.asarray(snr, dtype=float)) if np.ndim(snr) else float(np.log2(1.0 + snr))


def beamform(ch: ChannelRealization, theta, config: ScenarioConfig) -> BeamformerOutput:
    w = mrt_beamformer(ch, theta, config.tx_power)
    gain = channel_gain(ch, theta)
    snr = float(abs(effective_channel(ch, theta) @ w) ** 2 / config.sigma2)
    return BeamformerOutput(w=w, gain=gain, snr=snr, rate=rate(snr))
