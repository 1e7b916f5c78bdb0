"""RISBFNN: a five-layer fully connected phase predictor trained without labels.

Layers 1-4 are FC -> BatchNorm -> ReLU, layer 5 is FC -> linear, and the
output ``p`` is mapped to unit-modulus phases by ``theta = exp(j p)``.  The
training loss is the negative mean channel gain over a mini-batch, so no
reference solutions are needed.

Weights are stored as (fan_in, fan_out) matrices and applied as ``x @ W + b``.
"""

from __future__ import annotations

import logging
import math
import struct
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import ChannelRealization, Dataset
from .features import (Standardizer, apply_standardizer, batch_features,
                       dataset_features, feature_length, fit_standardizer)
from .objective import cascaded

log = logging.getLogger(__name__)

BN_MOMENTUM = 0.9
BN_EPSILON = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

MODEL_MAGIC = b"RISM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ArchitectureSpec:
    M: int
    N: int
    layer_widths: Optional[tuple[int, ...]] = None
    bn_after_fc: bool = True

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be positive")
        if self.layer_widths is None:
            object.__setattr__(self, "layer_widths",
                               tuple(k * self.N for k in (32, 16, 8, 4, 1)))
        else:
            object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) != 5 or self.layer_widths[-1] != self.N:
            raise ValueError("need five layers with the last one N wide")

    @property
    def input_width(self) -> int:
        return feature_length(self.M, self.N)

    @property
    def activations(self) -> tuple[str, ...]:
        return ("relu",) * 4 + ("linear",)

    def layer_dims(self) -> list[tuple[int, int]]:
        widths = (self.input_width,) + self.layer_widths
        return list(zip(widths[:-1], widths[1:]))


@dataclass
class NetworkParams:
    spec: ArchitectureSpec
    weights: list
    biases: list
    bn_scale: list
    bn_shift: list
    running_mean: list
    running_var: list
    standardizer: Standardizer
    _folded: Optional[list] = field(default=None, init=False, repr=False, compare=False)

    @property
    def dtype(self):
        return self.weights[0].dtype

    def trainable(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order: W1, b1, scale1, shift1, ..., W5, b5."""
        out = []
        for i in range(5):
            out += [self.weights[i], self.biases[i]]
            if i < 4 and self.spec.bn_after_fc:
                out += [self.bn_scale[i], self.bn_shift[i]]
        return out

    def astype(self, dtype) -> "NetworkParams":
        cast = lambda arrays: [a.astype(dtype) for a in arrays]
        return NetworkParams(self.spec, cast(self.weights), cast(self.biases), cast(self.bn_scale),
                             cast(self.bn_shift), cast(self.running_mean), cast(self.running_var),
                             self.standardizer)

    def copy(self) -> "NetworkParams":
        return self.astype(self.dtype)

    def invalidate(self) -> None:
        self._folded = None

    def folded_layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Inference-mode layers with BatchNorm folded into the FC weights."""
        if self._folded is None:
            layers = []
            for i in range(5):
                W, b = self.weights[i], self.biases[i]
                if i < 4 and self.spec.bn_after_fc:
                    s = self.bn_scale[i] / np.sqrt(self.running_var[i] + BN_EPSILON)
                    W = W * s
                    b = (b - self.running_mean[i]) * s + self.bn_shift[i]
                layers.append((np.ascontiguousarray(W), b))
            self._folded = layers
        return self._folded


def init_network(spec: ArchitectureSpec, rng: np.random.Generator,
                 standardizer: Optional[Standardizer] = None, dtype=np.float32) -> NetworkParams:
    """He-uniform for the ReLU layers, Glorot-uniform for the linear output layer."""
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(spec.layer_dims()):
        if i < 4:
            limit = math.sqrt(6.0 / fan_in)
        else:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    hidden = spec.layer_widths[:4]
    if standardizer is None:
        standardizer = Standardizer.identity(spec.input_width)
    return NetworkParams(
        spec=spec,
        weights=weights,
        biases=biases,
        bn_scale=[np.ones(w, dtype=dtype) for w in hidden],
        bn_shift=[np.zeros(w, dtype=dtype) for w in hidden],
        running_mean=[np.zeros(w, dtype=dtype) for w in hidden],
        running_var=[np.ones(w, dtype=dtype) for w in hidden],
        standardizer=standardizer,
    )


def init_variance(spec: ArchitectureSpec) -> list[float]:
    """Target weight variance of the initializer, per layer."""
    out = []
    for i, (fan_in, fan_out) in enumerate(spec.layer_dims()):
        out.append(2.0 / fan_in if i < 4 else 2.0 / (fan_in + fan_out))
    return out


def forward(params: NetworkParams, x: np.ndarray, mode: str = "infer"):
    """Run the network on standardized features ``x`` (K, F).

    Returns ``(p_pred, cache)``.  Train mode normalizes with batch statistics,
    updates the running statistics and fills the cache used by ``backward``.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x, dtype=params.dtype)
    if x.ndim != 2 or x.shape[1] != params.spec.input_width:
        raise ValueError(f"expected features of width {params.spec.input_width}, got {x.shape}")
    train = mode == "train"
    if train and x.shape[0] < 2:
        raise ValueError("train mode needs at least 2 samples for batch statistics")
    bn = params.spec.bn_after_fc
    cache = {"mode": mode, "inputs": [], "xhat": [], "inv_std": [], "relu_mask": []}
    h = x
    for i in range(5):
        cache["inputs"].append(h)
        z = h @ params.weights[i] + params.biases[i]
        if i == 4:
            break
        if bn:
            if train:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                params.running_mean[i] *= BN_MOMENTUM
                params.running_mean[i] += (1 - BN_MOMENTUM) * mu
                params.running_var[i] *= BN_MOMENTUM
                params.running_var[i] += (1 - BN_MOMENTUM) * var
            else:
                mu, var = params.running_mean[i], params.running_var[i]
            inv_std = 1.0 / np.sqrt(var + BN_EPSILON)
            xhat = (z - mu) * inv_std
            cache["xhat"].append(xhat)
            cache["inv_std"].append(inv_std)
            z = xhat * params.bn_scale[i] + params.bn_shift[i]
        mask = z > 0
        cache["relu_mask"].append(mask)
        h = z * mask
    if train:
        params.invalidate()
    return z, (cache if train else None)


def lambda_layer(p) -> np.ndarray:
    """theta = cos(p) + j sin(p)."""
    p = np.asarray(p)
    return np.cos(p) + 1j * np.sin(p)


def _effective(C: np.ndarray, h_d: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.einsum("kmn,kn->km", C, theta) + h_d


def unsupervised_loss(channels, theta) -> float:
    """Negative mean channel gain over a batch.

    ``channels`` is a Dataset or a sequence of ChannelRealization; ``theta``
    has shape (K, N).
    """
    if isinstance(channels, Dataset):
        G, h_r, h_d = channels.G, channels.h_r, channels.h_d
    else:
        if len(channels) == 0:
            raise ValueError("loss of an empty batch is undefined")
        G = np.stack([c.G for c in channels])
        h_r = np.stack([c.h_r for c in channels])
        h_d = np.stack([c.h_d for c in channels])
    if G.shape[0] == 0:
        raise ValueError("loss of an empty batch is undefined")
    theta = np.asarray(theta).reshape(G.shape[0], -1)
    r = _effective(cascaded(G, h_r), h_d, theta)
    return -float(np.mean(np.sum(np.abs(r) ** 2, axis=1)))


def loss_and_phase_grad(p: np.ndarray, C: np.ndarray, h_d: np.ndarray):
    """Loss and dLoss/dp for predicted phases ``p`` (K, N).

    dLoss/dp_n = (2/K) sum_i Im(conj(r_i) c_in exp(j p_n)).
    """
    K = p.shape[0]
    theta = lambda_layer(p)
    ctheta = C * theta[:, None, :]
    r = ctheta.sum(axis=2) + h_d
    loss = -np.mean(np.sum(r.real ** 2 + r.imag ** 2, axis=1))
    dp = (2.0 / K) * np.einsum("km,kmn->kn", r.conj(), ctheta).imag
    return float(loss), dp.astype(p.dtype, copy=False)


def backward(params: NetworkParams, cache, dp: np.ndarray) -> list[np.ndarray]:
    """Gradients of the loss w.r.t. ``params.trainable()``, given dLoss/dp."""
    if cache is None or cache.get("mode") != "train":
        raise RuntimeError("backward needs the cache of a train-mode forward pass")
    bn = params.spec.bn_after_fc
    grads: list = [None] * 5
    delta = dp
    for i in range(4, -1, -1):
        if i < 4:
            delta = delta * cache["relu_mask"][i]
            if bn:
                xhat = cache["xhat"][i]
                d_scale = np.sum(delta * xhat, axis=0)
                d_shift = np.sum(delta, axis=0)
                dxhat = delta * params.bn_scale[i]
                K = dxhat.shape[0]
                delta = (cache["inv_std"][i] / K) * (
                    K * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
                )
        h = cache["inputs"][i]
        dW = h.T @ delta
        db = delta.sum(axis=0)
        layer = [dW, db]
        if i < 4 and bn:
            layer += [d_scale, d_shift]
        grads[i] = layer
        if i > 0:
            delta = delta @ params.weights[i].T
    return [g for layer in grads for g in layer]


def loss_and_grads(params: NetworkParams, x: np.ndarray, C: np.ndarray, h_d: np.ndarray):
    p, cache = forward(params, x, "train")
    loss, dp = loss_and_phase_grad(p, C, h_d)
    return loss, backward(params, cache, dp)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params, grads: Sequence[np.ndarray], state: AdamState, lr: float):
    """One bias-corrected Adam update, applied in place.

    ``params`` is a NetworkParams or a list of arrays aligned with ``grads``.
    """
    arrays = params.trainable() if isinstance(params, NetworkParams) else list(params)
    state.t += 1
    c1 = 1.0 - ADAM_BETA1 ** state.t
    c2 = 1.0 - ADAM_BETA2 ** state.t
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        a -= (lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPSILON)).astype(a.dtype, copy=False)
    if isinstance(params, NetworkParams):
        params.invalidate()
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 5000
    init_lr: float = 0.001
    max_epochs: int = 1000
    early_stop_patience: int = 30
    plateau_patience: int = 15
    lr_decay: float = 0.33
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self):
        for name in ("batch_size", "max_epochs", "early_stop_patience", "plateau_patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.init_lr <= 0:
            raise ValueError("init_lr must be positive")
        if not 0 < self.lr_decay < 1:
            raise ValueError("lr_decay must lie in (0, 1)")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self) -> int:
        return len(self.val_loss)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch]


def _blas_limit(threads: Optional[int]):
    if threads is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


def _prepare(ds: Dataset, standardizer: Standardizer, dtype):
    x = apply_standardizer(standardizer, dataset_features(ds)).astype(dtype)
    cdtype = np.complex64 if dtype == np.float32 else np.complex128
    C = cascaded(ds.G, ds.h_r).astype(cdtype)
    return x, C, ds.h_d.astype(cdtype)


def evaluate_loss(params: NetworkParams, x: np.ndarray, C: np.ndarray, h_d: np.ndarray,
                  chunk: int = 20000) -> float:
    total = 0.0
    for s in range(0, x.shape[0], chunk):
        p, _ = forward(params, x[s:s + chunk], "infer")
        loss, _ = loss_and_phase_grad(p, C[s:s + chunk], h_d[s:s + chunk])
        total += loss * p.shape[0]
    return total / x.shape[0]


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    batches = [order[s:s + batch_size] for s in range(0, order.size, batch_size)]
    # a trailing single sample cannot be batch-normalized on its own
    if len(batches) > 1 and batches[-1].size == 1:
        batches[-2] = np.concatenate(batches[-2:])
        batches.pop()
    return batches


def train(train_set: Dataset, val_set: Dataset, spec: ArchitectureSpec,
          config: TrainConfig = TrainConfig(), dtype=np.float32,
          on_epoch: Optional[Callable[[int, TrainHistory], None]] = None):
    """Mini-batch Adam on the negative-gain loss with plateau decay and early stopping.

    Returns the parameters of the best-validation epoch and the history.
    """
    for name, ds in (("train", train_set), ("validation", val_set)):
        if (ds.M, ds.N) != (spec.M, spec.N):
            raise ValueError(f"{name} set has (M, N) = {(ds.M, ds.N)}, model expects {(spec.M, spec.N)}")
    if len(train_set) < 2:
        raise ValueError("need at least two training samples")

    with _blas_limit(config.threads):
        rng = np.random.default_rng(config.seed)
        standardizer = fit_standardizer(train_set)
        params = init_network(spec, rng, standardizer, dtype)
        x_tr, C_tr, hd_tr = _prepare(train_set, standardizer, dtype)
        x_va, C_va, hd_va = _prepare(val_set, standardizer, dtype)

        state = AdamState.zeros_like(params.trainable())
        history = TrainHistory()
        lr = config.init_lr
        best = math.inf
        best_params = params.copy()
        since_best = 0
        since_decay = 0
        for epoch in range(config.max_epochs):
            order = rng.permutation(len(train_set))
            total = 0.0
            for idx in _batches(order, config.batch_size):
                loss, grads = loss_and_grads(params, x_tr[idx], C_tr[idx], hd_tr[idx])
                adam_step(params, grads, state, lr)
                total += loss * idx.size
            val = evaluate_loss(params, x_va, C_va, hd_va)
            history.train_loss.append(total / len(train_set))
            history.val_loss.append(val)
            history.lr.append(lr)
            if val < best:
                best = val
                best_params = params.copy()
                history.best_epoch = epoch
                since_best = 0
                since_decay = 0
            else:
                since_best += 1
                since_decay += 1
            log.info("epoch %d train %.6g val %.6g lr %.3g", epoch + 1,
                     history.train_loss[-1], val, lr)
            if on_epoch is not None:
                on_epoch(epoch, history)
            if since_best >= config.early_stop_patience:
                log.info("early stop after %d epochs", epoch + 1)
                break
            if since_decay >= config.plateau_patience:
                lr *= config.lr_decay
                since_decay = 0
    return best_params, history


def predict_batch(params: NetworkParams, G: np.ndarray, h_r: np.ndarray, h_d: np.ndarray) -> np.ndarray:
    if G.shape[1:] != (params.spec.M, params.spec.N):
        raise ValueError(f"channel shape {G.shape[1:]} does not match model {(params.spec.M, params.spec.N)}")
    x = apply_standardizer(params.standardizer, batch_features(G, h_r, h_d)).astype(params.dtype)
    for i, (W, b) in enumerate(params.folded_layers()):
        x = x @ W + b
        if i < 4:
            np.maximum(x, 0, out=x)
    return lambda_layer(x.astype(float))


def predict(params: NetworkParams, ch: ChannelRealization) -> np.ndarray:
    """Phase vector for one channel: standardize, run in inference mode, map to exp(jp)."""
    return predict_batch(params, ch.G[None], ch.h_r[None], ch.h_d[None])[0]


def predict_dataset(params: NetworkParams, ds: Dataset, chunk: int = 20000) -> np.ndarray:
    return np.concatenate([
        predict_batch(params, ds.G[s:s + chunk], ds.h_r[s:s + chunk], ds.h_d[s:s + chunk])
        for s in range(0, len(ds), chunk)
    ])


_U32 = struct.Struct("<I")


def model_to_bytes(params: NetworkParams) -> bytes:
    if not params.spec.bn_after_fc:
        raise ValueError("the model file format stores BatchNorm layers; BN-free models cannot be saved")
    spec = params.spec
    f64 = lambda a: np.ascontiguousarray(a, dtype="<f8").tobytes()
    out = [MODEL_MAGIC, struct.pack("<IIII", MODEL_VERSION, spec.M, spec.N, spec.input_width),
           f64(params.standardizer.mean), f64(params.standardizer.std)]
    for i, (fan_in, fan_out) in enumerate(spec.layer_dims()):
        out.append(struct.pack("<II", fan_in, fan_out))
        out.append(f64(params.weights[i]))
        out.append(f64(params.biases[i]))
        if i < 4:
            out += [f64(params.bn_scale[i]), f64(params.bn_shift[i]),
                    f64(params.running_mean[i]), f64(params.running_var[i])]
    return b"".join(out)


def model_from_bytes(buf: bytes, dtype=np.float32) -> NetworkParams:
    if buf[:4] != MODEL_MAGIC:
        raise ValueError(f"not a model file (magic {buf[:4]!r})")
    pos = 4

    def take(fmt: str):
        nonlocal pos
        s = struct.Struct(fmt)
        if pos + s.size > len(buf):
            raise ValueError("truncated model file")
        vals = s.unpack_from(buf, pos)
        pos += s.size
        return vals

    def arr(count: int, shape=None):
        nonlocal pos
        if pos + 8 * count > len(buf):
            raise ValueError("truncated model file")
        a = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).astype(float)
        pos += 8 * count
        return a.reshape(shape) if shape else a

    version, M, N, F = take("<IIII")
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    if F != feature_length(M, N):
        raise ValueError(f"feature length {F} inconsistent with M={M}, N={N}")
    standardizer = Standardizer(arr(F), arr(F))
    weights, biases, scale, shift, rmean, rvar = [], [], [], [], [], []
    widths = []
    prev = F
    for i in range(5):
        fan_in, fan_out = take("<II")
        if fan_in != prev:
            raise ValueError(f"layer {i + 1} input width {fan_in} does not follow {prev}")
        weights.append(arr(fan_in * fan_out, (fan_in, fan_out)).astype(dtype))
        biases.append(arr(fan_out).astype(dtype))
        if i < 4:
            scale.append(arr(fan_out).astype(dtype))
            shift.append(arr(fan_out).astype(dtype))
            rmean.append(arr(fan_out).astype(dtype))
            rvar.append(arr(fan_out).astype(dtype))
        widths.append(fan_out)
        prev = fan_out
    if pos != len(buf):
        raise ValueError("trailing bytes in model file")
    spec = ArchitectureSpec(M, N, tuple(widths))
    return NetworkParams(spec, weights, biases, scale, shift, rmean, rvar, standardizer)


def save_model(params: NetworkParams, path) -> None:
    Path(path).write_bytes(model_to_bytes(params))


def load_model(path, dtype=np.float32) -> NetworkParams:
    return model_from_bytes(Path(path).read_bytes(), dtype)
