"""Indoor AP-RIS-user scenario: geometry, Rayleigh channels and datasets.

Every channel entry is ``sqrt(path_loss) * CN(0, 1)`` where the path loss of a
link of length ``d`` is ``20.4 log10(d / d_ref)`` dB.  Datasets draw a fresh
geometry per sample and use one counter-based Philox stream per sample, keyed
by ``(seed, index)``, so the output does not depend on how generation is split
across workers.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

PATH_LOSS_EXPONENT_DB = 20.4

DATASET_MAGIC = b"RISB"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIIIQQ")

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class ScenarioConfig:
    M: int = 1
    N: int = 8
    d_AR: float = 8.0
    d0_range: tuple[float, float] = (0.0, 8.0)
    d1_range: tuple[float, float] = (1.0, 6.0)
    d_ref: float = 1.0
    snr_db: float = 10.0
    sigma2: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "d0_range", tuple(float(v) for v in self.d0_range))
        object.__setattr__(self, "d1_range", tuple(float(v) for v in self.d1_range))
        if self.d_AR <= 0 or self.d_ref <= 0:
            raise ValueError("d_AR and d_ref must be positive")
        for name in ("d0_range", "d1_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} minimum exceeds maximum: {lo} > {hi}")
            if lo < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.d1_range[1] <= 0:
            raise ValueError("d1_range must allow a positive distance")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    @property
    def tx_power(self) -> float:
        """Transmit power ``p`` such that ``p / sigma2`` equals ``snr_db``."""
        return self.sigma2 * 10.0 ** (self.snr_db / 10.0)

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    def with_size(self, M: int, N: int) -> "ScenarioConfig":
        return replace(self, M=M, N=N)


@dataclass(frozen=True)
class GeometrySample:
    d0: float
    d1: float
    d_AU: float
    d_RU: float

    @classmethod
    def from_offsets(cls, d0: float, d1: float, d_AR: float) -> "GeometrySample":
        return cls(
            d0=d0,
            d1=d1,
            d_AU=math.sqrt(d0 ** 2 + d1 ** 2),
            d_RU=math.sqrt((d_AR - d0) ** 2 + d1 ** 2),
        )


@dataclass(frozen=True)
class ChannelRealization:
    G: np.ndarray
    h_r: np.ndarray
    h_d: np.ndarray
    geometry: Optional[GeometrySample] = None

    def __post_init__(self):
        G = np.asarray(self.G, dtype=complex)
        h_r = np.asarray(self.h_r, dtype=complex).reshape(-1)
        h_d = np.asarray(self.h_d, dtype=complex).reshape(-1)
        if G.ndim != 2:
            raise ValueError(f"G must be a matrix, got shape {G.shape}")
        if G.shape != (h_d.size, h_r.size):
            raise ValueError(
                f"inconsistent shapes: G {G.shape}, h_r {h_r.shape}, h_d {h_d.shape}"
            )
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(h_r)) and np.all(np.isfinite(h_d))):
            raise ValueError("channel entries must be finite")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h_r", h_r)
        object.__setattr__(self, "h_d", h_d)

    @property
    def M(self) -> int:
        return self.G.shape[0]

    @property
    def N(self) -> int:
        return self.G.shape[1]

    def conj(self) -> "ChannelRealization":
        return ChannelRealization(self.G.conj(), self.h_r.conj(), self.h_d.conj(), self.geometry)

    def scaled(self, factor: float) -> "ChannelRealization":
        """Rescale every path to the receiver by ``factor`` (G and h_d; h_r stays).

        The effective channel becomes factor * (G Theta h_r + h_d) for every
        Theta, so all gains scale by factor**2.
        """
        return ChannelRealization(self.G * factor, self.h_r, self.h_d * factor, self.geometry)


@dataclass
class Dataset:
    """A batch of channel realizations stored as stacked arrays.

    ``G`` has shape (K, M, N), ``h_r`` (K, N) and ``h_d`` (K, M).  The geometry
    offsets are kept when the dataset was generated in-process; the binary file
    format does not carry them.
    """

    config: ScenarioConfig
    G: np.ndarray
    h_r: np.ndarray
    h_d: np.ndarray
    seed: int
    d0: Optional[np.ndarray] = field(default=None, repr=False)
    d1: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        K = self.G.shape[0]
        M, N = self.config.M, self.config.N
        if self.G.shape != (K, M, N) or self.h_r.shape != (K, N) or self.h_d.shape != (K, M):
            raise ValueError("dataset arrays do not match the configured (M, N)")

    @property
    def M(self) -> int:
        return self.config.M

    @property
    def N(self) -> int:
        return self.config.N

    def __len__(self) -> int:
        return self.G.shape[0]

    def __getitem__(self, i: int) -> ChannelRealization:
        geometry = None
        if self.d0 is not None:
            geometry = GeometrySample.from_offsets(float(self.d0[i]), float(self.d1[i]), self.config.d_AR)
        return ChannelRealization(self.G[i], self.h_r[i], self.h_d[i], geometry)

    def __iter__(self) -> Iterator[ChannelRealization]:
        for i in range(len(self)):
            yield self[i]

    @property
    def samples(self) -> list[ChannelRealization]:
        return list(self)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.config,
            self.G[index],
            self.h_r[index],
            self.h_d[index],
            self.seed,
            None if self.d0 is None else self.d0[index],
            None if self.d1 is None else self.d1[index],
        )

    def scaled(self, factor: float) -> "Dataset":
        """Uniform amplitude rescale; see ChannelRealization.scaled."""
        return Dataset(self.config, self.G * factor, self.h_r, self.h_d * factor,
                       self.seed, self.d0, self.d1)

    @classmethod
    def from_samples(cls, config: ScenarioConfig, samples: Sequence[ChannelRealization], seed: int = 0) -> "Dataset":
        if not samples:
            raise ValueError("dataset needs at least one sample")
        return cls(
            config,
            np.stack([s.G for s in samples]),
            np.stack([s.h_r for s in samples]),
            np.stack([s.h_d for s in samples]),
            seed,
        )


def path_loss_linear(d: float, d_ref: float = 1.0):
    """Linear power gain of a link of length ``d`` (array-friendly)."""
    if isinstance(d, (int, float)):
        if d <= 0 or d_ref <= 0:
            raise ValueError("distances must be positive")
        return 10.0 ** (-PATH_LOSS_EXPONENT_DB * math.log10(d / d_ref) / 10.0)
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0) or d_ref <= 0:
        raise ValueError("distances must be positive")
    gain = 10.0 ** (-PATH_LOSS_EXPONENT_DB * np.log10(d / d_ref) / 10.0)
    return float(gain) if gain.ndim == 0 else gain


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for sample ``index`` of a dataset with ``seed``."""
    key = np.array([seed & _SEED_MASK, index & _SEED_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples: (x + jy) / sqrt(2)."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    xy = rng.standard_normal((2,) + shape)
    return (xy[0] + 1j * xy[1]) / math.sqrt(2.0)


def sample_geometry(rng: np.random.Generator, config: ScenarioConfig) -> GeometrySample:
    d0 = rng.uniform(*config.d0_range)
    d1 = rng.uniform(*config.d1_range)
    return GeometrySample.from_offsets(float(d0), float(d1), config.d_AR)


def _draw_channels(rng: np.random.Generator, geometry: GeometrySample, config: ScenarioConfig):
    M, N = config.M, config.N
    a_AR = math.sqrt(path_loss_linear(float(config.d_AR), config.d_ref))
    a_RU = math.sqrt(path_loss_linear(geometry.d_RU, config.d_ref))
    a_AU = math.sqrt(path_loss_linear(geometry.d_AU, config.d_ref))
    G = a_AR * complex_normal(rng, (M, N))
    h_r = a_RU * complex_normal(rng, N)
    h_d = a_AU * complex_normal(rng, M)
    return G, h_r, h_d


def sample_channels(rng: np.random.Generator, geometry: GeometrySample,
                    config: ScenarioConfig) -> ChannelRealization:
    """G, h_r, h_d with i.i.d. CN(0, 1) entries scaled by the link amplitude."""
    return ChannelRealization(*_draw_channels(rng, geometry, config), geometry)


def _generate_range(config: ScenarioConfig, seed: int, start: int, stop: int):
    K = stop - start
    G = np.empty((K, config.M, config.N), dtype=complex)
    h_r = np.empty((K, config.N), dtype=complex)
    h_d = np.empty((K, config.M), dtype=complex)
    d0 = np.empty(K)
    d1 = np.empty(K)
    for k, i in enumerate(range(start, stop)):
        rng = sample_rng(seed, i)
        geometry = sample_geometry(rng, config)
        G[k], h_r[k], h_d[k] = _draw_channels(rng, geometry, config)
        d0[k], d1[k] = geometry.d0, geometry.d1
    return G, h_r, h_d, d0, d1


def generate_dataset(config: ScenarioConfig, count: int, seed: int, workers: int = 1) -> Dataset:
    """Draw ``count`` independent realizations.

    The result is a pure function of ``(config, count, seed)``; ``workers``
    only changes how the index range is split.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if not 0 <= seed <= _SEED_MASK:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    workers = max(1, min(int(workers), count))
    bounds = np.linspace(0, count, workers + 1).astype(int)
    if workers == 1:
        parts = [_generate_range(config, seed, 0, count)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: _generate_range(config, seed, *ab),
                                  zip(bounds[:-1], bounds[1:])))
    G, h_r, h_d, d0, d1 = (np.concatenate(arrays) for arrays in zip(*parts))
    return Dataset(config, G, h_r, h_d, seed, d0, d1)


def _complex_to_f64(z: np.ndarray) -> bytes:
    return np.ascontiguousarray(z, dtype="<c16").tobytes()


def dataset_to_bytes(ds: Dataset) -> bytes:
    K, M, N = len(ds), ds.M, ds.N
    header = _HEADER.pack(DATASET_MAGIC, DATASET_VERSION, M, N, K, ds.seed & _SEED_MASK)
    body = np.concatenate(
        [ds.G.reshape(K, M * N), ds.h_r, ds.h_d], axis=1
    )
    return header + _complex_to_f64(body)


def dataset_from_bytes(buf: bytes, base_config: Optional[ScenarioConfig] = None) -> Dataset:
    if len(buf) < _HEADER.size:
        raise ValueError("truncated dataset file")
    magic, version, M, N, K, seed = _HEADER.unpack_from(buf)
    if magic != DATASET_MAGIC:
        raise ValueError(f"not a dataset file (magic {magic!r})")
    if version != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    width = M * N + N + M
    expected = _HEADER.size + K * width * 16
    if len(buf) != expected:
        raise ValueError(f"dataset file size {len(buf)} does not match header ({expected})")
    body = np.frombuffer(buf, dtype="<c16", offset=_HEADER.size).reshape(K, width)
    body = body.astype(complex)
    config = (base_config or ScenarioConfig()).with_size(M, N)
    return Dataset(
        config,
        body[:, : M * N].reshape(K, M, N).copy(),
        body[:, M * N : M * N + N].copy(),
        body[:, M * N + N :].copy(),
        int(seed),
    )


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path, base_config: Optional[ScenarioConfig] = None) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes(), base_config)
