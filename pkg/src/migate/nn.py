"""Small deterministic neural substrate: dense nets, Adam, training loop, PCA.

Everything is plain numpy with hand-derived gradients; the architectures in
this project are small and fixed, so no autodiff graph is needed. All
randomness (init, minibatch order) flows from the seed in TrainConfig, which
makes a (seed, data, config) triple reproduce parameter trajectories exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Callable, Sequence

import numpy as np


class NumericalError(RuntimeError):
    """Non-finite loss or gradient encountered."""


class RankError(ValueError):
    """Requested more principal components than the data's rank supports."""


def logsumexp(values, axis=None):
    """Stable log(sum(exp(values))) along an axis."""
    values = np.asarray(values, dtype=np.float64)
    peak = np.max(values, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    total = np.sum(np.exp(values - peak), axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.log(total) + peak
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def relu(x):
    return np.maximum(x, 0.0)


ACTIVATIONS = ("relu", "identity")


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


class DenseNet:
    """Fully connected net; forward accepts (d,) or (N, d)."""

    def __init__(self, layers: Sequence[DenseLayer]):
        self.layers = list(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @classmethod
    def init(cls, dims: Sequence[int], activations: Sequence[str], rng: np.random.Generator):
        """He-style uniform fan-in init: W ~ U(+-sqrt(6/fan_in)), b = 0."""
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        layers = []
        for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
            bound = np.sqrt(6.0 / fan_in)
            weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            layers.append(DenseLayer(weight, np.zeros(fan_out), act))
        return cls(layers)

    def parameters(self) -> list[np.ndarray]:
        params = []
        for layer in self.layers:
            params.append(layer.weight)
            params.append(layer.bias)
        return params

    def forward(self, x: np.ndarray) -> np.ndarray:
        squeeze = False
        h = np.asarray(x, dtype=np.float64)
        if h.ndim == 1:
            h = h[None, :]
            squeeze = True
        if h.shape[1] != self.input_dim:
            raise ValueError(f"input dim {h.shape[1]} != expected {self.input_dim}")
        for layer in self.layers:
            h = h @ layer.weight.T + layer.bias
            if layer.activation == "relu":
                h = relu(h)
        return h[0] if squeeze else h

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping (input, pre-activation) per layer for backprop."""
        h = np.asarray(x, dtype=np.float64)
        caches = []
        for layer in self.layers:
            pre = h @ layer.weight.T + layer.bias
            caches.append((h, pre))
            h = relu(pre) if layer.activation == "relu" else pre
        return h, caches

    def backward(self, caches, grad_out: np.ndarray):
        """Backprop an upstream gradient; returns (param_grads, grad_input)."""
        grads: list[np.ndarray] = []
        g = grad_out
        for layer, (inp, pre) in zip(reversed(self.layers), reversed(caches)):
            if layer.activation == "relu":
                g = g * (pre > 0)
            grads.append(np.sum(g, axis=0))          # bias
            grads.append(g.T @ inp)                  # weight
            g = g @ layer.weight
        grads.reverse()
        return grads, g


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 30
    early_stop_min_delta: float = 1e-4
    early_stop_patience: int = 5
    seed: int = 42
    lr_decay_factor: float = 0.5
    lr_decay_period: int = 10

    def __post_init__(self):
        if self.max_epochs <= 0:
            raise ValueError("max_epochs must be positive")
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must be in (0, 1]")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update, applied to params in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient in adam_step")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


class EarlyStopper:
    """Patience-based stopping: an epoch improves only if it beats the best
    seen so far by at least min_delta; the threshold moves only on qualifying
    improvements."""

    def __init__(self, min_delta: float, patience: int):
        self.min_delta = min_delta
        self.patience = patience
        self.best = np.inf
        self.wait = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch's validation loss; True means stop now."""
        if val_loss <= self.best - self.min_delta or not np.isfinite(self.best):
            self.best = val_loss
            self.wait = 0
        else:
            self.wait += 1
        return self.wait >= self.patience


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.val_loss)


LossFn = Callable[..., tuple[float, list[np.ndarray] | None]]


def _eval_loss(model, loss_fn: LossFn, data, chunk: int = 8192) -> float:
    n = len(data[0])
    if n == 0:
        raise ValueError("empty evaluation set")
    total = 0.0
    for start in range(0, n, chunk):
        batch = tuple(a[start:start + chunk] for a in data)
        loss, _ = loss_fn(model, batch, grads=False)
        total += loss * len(batch[0])
    return total / n


def train(model, train_data, loss_fn: LossFn, cfg: TrainConfig, val_data) -> TrainHistory:
    """Minibatch Adam with step LR decay and patience-based early stopping.

    The model exposes parameters() as a list of arrays updated in place;
    loss_fn(model, batch, grads=...) returns (scalar loss, grads aligned with
    parameters()). On finish the model carries the parameters of the epoch
    with the lowest validation loss.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    params = model.parameters()
    state = AdamState.init(params)
    stopper = EarlyStopper(cfg.early_stop_min_delta, cfg.early_stop_patience)
    history = TrainHistory()
    best_val = np.inf
    best_params = [p.copy() for p in params]
    n = len(train_data[0])
    if n == 0:
        raise ValueError("empty training set")
    for epoch in range(cfg.max_epochs):
        lr = cfg.learning_rate * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_period)
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = tuple(a[idx] for a in train_data)
            loss, grads = loss_fn(model, batch, grads=True)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch + 1}")
            epoch_loss += loss * len(idx)
            adam_step(params, grads, state, lr)
        val_loss = _eval_loss(model, loss_fn, val_data)
        if not np.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch + 1}")
        history.train_loss.append(epoch_loss / n)
        history.val_loss.append(val_loss)
        history.lr.append(lr)
        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.copy() for p in params]
            history.best_epoch = epoch
        if stopper.update(val_loss):
            history.stopped_early = True
            break
    for p, best in zip(params, best_params):
        p[...] = best
    return history


def subseed(seed: int, name: str) -> int:
    """Stable named sub-seed so one config seed drives independent stages."""
    codes = {"estimator": 1, "entropy": 2, "discriminators": 3,
             "gate": 4, "corruption": 5, "synth": 6, "init": 7}
    if name not in codes:
        raise ValueError(f"unknown sub-seed name {name!r}")
    seq = np.random.SeedSequence([int(seed), codes[name]])
    return int(seq.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# PCA

@dataclass
class PcaModel:
    mean: np.ndarray                 # (d,)
    components: np.ndarray           # (k, d), orthonormal rows
    explained_variance: np.ndarray   # (k,), non-increasing


def pca_fit(x: np.ndarray, k: int) -> PcaModel:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("pca_fit expects an (N, d) matrix")
    n, d = x.shape
    if n < 2:
        raise ValueError("pca_fit needs at least 2 samples")
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k={k} outside [1, min(N, d)={min(n, d)}]")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    top = max(float(eigvals[0]), 0.0)
    tol = top * 1e-9
    rank = int(np.sum(eigvals > tol)) if top > 0 else 0
    if k > rank:
        raise RankError(f"k={k} exceeds data rank {rank}")
    components = eigvecs[:, :k].T.copy()
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=components,
                    explained_variance=np.maximum(eigvals[:k], 0.0))


def pca_transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    out = (x - model.mean) @ model.components.T
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# Dense-net checkpoints

NET_MAGIC = b"MINN"
VERSION_NET = 1
_NET_HEADER = struct.Struct("<4sHI")
_ACT_CODE = {"relu": 0, "identity": 1}
_ACT_NAME = {v: k for k, v in _ACT_CODE.items()}


def save_net(net: DenseNet, dest: str | BinaryIO) -> None:
    """Layer dims, activations, and f32 parameters, little-endian."""
    payload = bytearray()
    payload += _NET_HEADER.pack(NET_MAGIC, VERSION_NET, len(net.layers))
    for layer in net.layers:
        out_dim, in_dim = layer.weight.shape
        payload += struct.pack("<IIB", out_dim, in_dim, _ACT_CODE[layer.activation])
        payload += layer.weight.astype("<f4").tobytes()
        payload += layer.bias.astype("<f4").tobytes()
    if isinstance(dest, str):
        with open(dest, "wb") as fh:
            fh.write(payload)
    else:
        dest.write(payload)


def load_net(src: str | BinaryIO) -> DenseNet:
    if isinstance(src, str):
        with open(src, "rb") as fh:
            return load_net(fh)
    head = src.read(_NET_HEADER.size)
    if len(head) < 4 or head[:4] != NET_MAGIC:
        raise ValueError("bad magic: not a dense-net checkpoint")
    _, version, n_layers = _NET_HEADER.unpack(head)
    if version != VERSION_NET:
        raise ValueError(f"unsupported checkpoint version {version}")
    layers = []
    for _ in range(n_layers):
        out_dim, in_dim, act = struct.unpack("<IIB", src.read(9))
        weight = np.frombuffer(src.read(4 * out_dim * in_dim), dtype="<f4")
        bias = np.frombuffer(src.read(4 * out_dim), dtype="<f4")
        layers.append(DenseLayer(weight.reshape(out_dim, in_dim).astype(np.float64),
                                 bias.astype(np.float64), _ACT_NAME[act]))
    return DenseNet(layers)


__all__ = [
    "ACTIVATIONS", "AdamState", "DenseLayer", "DenseNet", "EarlyStopper",
    "NumericalError", "PcaModel", "RankError", "TrainConfig", "TrainHistory",
    "adam_step", "load_net", "logsumexp", "pca_fit", "pca_transform", "relu",
    "save_net", "subseed", "train", "replace",
]
