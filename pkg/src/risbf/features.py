"""Product-structure features and per-dimension standardization.

Feature layout (version 1), length ``2(NM + M)``:
    Re(g_in h_rn), Im(g_in h_rn)  for i = 1..M, n = 1..N (row-major over (i, n))
    Re(h_di), Im(h_di)            for i = 1..M
Real and imaginary parts are interleaved per entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, Dataset
from .objective import cascaded

STD_EPSILON = 1e-8


def feature_length(M: int, N: int) -> int:
    return 2 * (N * M + M)


def _interleave(z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],), dtype=float)
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def batch_features(G: np.ndarray, h_r: np.ndarray, h_d: np.ndarray) -> np.ndarray:
    """Features for stacked channels; returns shape (K, 2(NM + M))."""
    K, M, N = G.shape
    c = cascaded(G, h_r).reshape(K, M * N)
    return _interleave(np.concatenate([c, h_d], axis=1))


def extract_features(ch: ChannelRealization) -> np.ndarray:
    return batch_features(ch.G[None], ch.h_r[None], ch.h_d[None])[0]


def dataset_features(ds: Dataset) -> np.ndarray:
    return batch_features(ds.G, ds.h_r, ds.h_d)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    epsilon: float = STD_EPSILON

    def __post_init__(self):
        if self.mean.shape != self.std.shape:
            raise ValueError("mean and std must have equal length")
        if np.any(self.std < 0):
            raise ValueError("std must be non-negative")

    def __len__(self) -> int:
        return self.mean.shape[0]

    def transform(self, f: np.ndarray) -> np.ndarray:
        return apply_standardizer(self, f)

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) * (self.std + self.epsilon) + self.mean

    @classmethod
    def identity(cls, length: int) -> "Standardizer":
        return cls(np.zeros(length), np.ones(length), 0.0)


def fit_standardizer(train) -> Standardizer:
    """Per-dimension mean and population std of training features.

    Accepts a Dataset or an already extracted (K, F) feature matrix.
    """
    F = dataset_features(train) if isinstance(train, Dataset) else np.asarray(train, dtype=float)
    if F.ndim != 2 or F.shape[0] == 0:
        raise ValueError("cannot fit a standardizer on an empty dataset")
    return Standardizer(F.mean(axis=0), F.std(axis=0))


def apply_standardizer(s: Standardizer, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != len(s):
        raise ValueError(f"feature length {f.shape[-1]} does not match standardizer ({len(s)})")
    return (f - s.mean) / (s.std + s.epsilon)
