"""Gaussian-mixture entropy models.

A model assigns each point x the value -log q(x) in nats, where q is a
K-component full-covariance mixture. Covariances are parametrized by an
unconstrained lower-triangular factor whose diagonal passes through a
softplus plus a small floor, so every component stays symmetric positive
definite no matter where the optimizer wanders.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np
from scipy.linalg import solve_triangular

from .nn import TrainConfig, logsumexp, train

DIAG_FLOOR = 1e-4
LOG_2PI = np.log(2.0 * np.pi)


def softplus(x):
    return np.logaddexp(0.0, x)


def inv_softplus(y):
    # inverse of log(1 + e^x); valid for y > 0
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class GmmEntropyModel:
    logits: np.ndarray      # (K,)
    means: np.ndarray       # (K, d)
    raw_scales: np.ndarray  # (K, d, d); lower triangle used, diag reparametrized

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.raw_scales = np.asarray(self.raw_scales, dtype=np.float64)

    @property
    def k(self) -> int:
        return self.logits.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [self.logits, self.means, self.raw_scales]

    def log_weights(self) -> np.ndarray:
        return self.logits - logsumexp(self.logits)

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights())

    def scale_factors(self) -> np.ndarray:
        """Effective lower-triangular factors L_k with positive diagonal."""
        d = self.dim
        tri = np.tril(self.raw_scales, -1)
        diag = softplus(np.diagonal(self.raw_scales, axis1=1, axis2=2)) + DIAG_FLOOR
        tri[:, np.arange(d), np.arange(d)] = diag
        return tri

    @classmethod
    def from_scales(cls, logits, means, scales):
        """Build from effective factors (diagonal mapped back through softplus)."""
        scales = np.asarray(scales, dtype=np.float64)
        raw = np.tril(scales, -1)
        d = scales.shape[-1]
        raw[:, np.arange(d), np.arange(d)] = inv_softplus(
            np.diagonal(scales, axis1=1, axis2=2) - DIAG_FLOOR)
        return cls(np.asarray(logits, dtype=np.float64),
                   np.asarray(means, dtype=np.float64), raw)


def _component_terms(model: GmmEntropyModel, x: np.ndarray):
    """Per-component log densities and whitened residuals.

    Returns (comp_log (K, N), z (K, d, N), scales (K, d, d)).
    """
    scales = model.scale_factors()
    k, d = model.k, model.dim
    n = x.shape[0]
    z = np.empty((k, d, n))
    logdet = np.empty(k)
    for j in range(k):
        diff = (x - model.means[j]).T  # (d, N)
        z[j] = solve_triangular(scales[j], diff, lower=True, check_finite=False)
        logdet[j] = np.sum(np.log(np.diagonal(scales[j])))
    quad = np.sum(z * z, axis=1)  # (K, N)
    logw = model.log_weights()
    comp_log = logw[:, None] - 0.5 * d * LOG_2PI - logdet[:, None] - 0.5 * quad
    return comp_log, z, scales


def log_density(model: GmmEntropyModel, x: np.ndarray):
    """log q(x) in nats; accepts (d,) or (N, d)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != model.dim:
        raise ValueError(f"input dim {x.shape[1]} != model dim {model.dim}")
    comp_log, _, _ = _component_terms(model, x)
    out = logsumexp(comp_log, axis=0)
    return float(out[0]) if squeeze else out


def pointwise_entropy(model: GmmEntropyModel, x: np.ndarray):
    """h(x) = -log q(x); the per-sample specificity term."""
    out = log_density(model, x)
    return -out if not np.isscalar(out) else -float(out)


def nll_loss(model: GmmEntropyModel, batch, grads: bool = True):
    """Mean negative log likelihood and analytic gradients.

    batch is a 1-tuple of an (N, d) array (matching the training protocol).
    """
    (x,) = batch
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    comp_log, z, scales = _component_terms(model, x)
    total = logsumexp(comp_log, axis=0)  # (N,)
    loss = -float(np.mean(total))
    if not grads:
        return loss, None
    gamma = np.exp(comp_log - total[None, :])  # (K, N) responsibilities
    pi = model.weights()
    grad_logits = -(gamma.mean(axis=1) - pi)
    k, d = model.k, model.dim
    grad_means = np.empty_like(model.means)
    grad_raw = np.zeros_like(model.raw_scales)
    diag_idx = np.arange(d)
    raw_diag = np.diagonal(model.raw_scales, axis1=1, axis2=2)
    for j in range(k):
        zg = z[j] @ gamma[j]  # (d,)
        grad_means[j] = -solve_triangular(scales[j], zg, lower=True, trans="T",
                                          check_finite=False) / n
        weighted = (z[j] * gamma[j][None, :]) @ z[j].T  # (d, d)
        weighted[diag_idx, diag_idx] -= gamma[j].sum()
        grad_l = -solve_triangular(scales[j], weighted, lower=True, trans="T",
                                   check_finite=False) / n
        grad_l = np.tril(grad_l)
        grad_l[diag_idx, diag_idx] *= sigmoid(raw_diag[j])
        grad_raw[j] = grad_l
    return loss, [grad_logits, grad_means, grad_raw]


def init_gmm(samples: np.ndarray, k: int, rng: np.random.Generator) -> GmmEntropyModel:
    """Seed means kmeans++-style and the scale from within-cluster spread.

    The optimizer's total travel is bounded by the decaying learning-rate
    schedule, so the init has to land near the data geometry: D^2-weighted
    seeding covers every cluster, and the isotropic scale comes from the
    median distance of points to their nearest seeded mean (a within-cluster
    statistic), not the pooled std, which is dominated by inter-cluster
    structure and can overshoot the true scale by orders of magnitude.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n, d = samples.shape
    if n < k:
        raise ValueError(f"need at least K={k} samples, got {n}")
    chosen = [int(rng.integers(0, n))]
    d2 = np.sum((samples - samples[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(0, n))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((samples - samples[nxt]) ** 2, axis=1))
    means = samples[chosen].copy()
    if n > 2048:
        probe = samples[rng.choice(n, size=2048, replace=False)]
    else:
        probe = samples
    nearest = np.full(probe.shape[0], np.inf)
    for mu in means:
        nearest = np.minimum(nearest, np.sqrt(np.sum((probe - mu) ** 2, axis=1)))
    std = float(np.median(nearest)) / np.sqrt(d)
    if std < 1e-3:
        warnings.warn("degenerate data scale; clamping initial covariance "
                      "(softplus floor active)", RuntimeWarning, stacklevel=2)
        std = 1e-3
    raw = np.zeros((k, d, d))
    raw[:, np.arange(d), np.arange(d)] = inv_softplus(max(std - DIAG_FLOOR, 1e-6))
    return GmmEntropyModel(np.zeros(k), means, raw)


def fit(samples: np.ndarray, cfg: TrainConfig | None = None, k: int = 6) -> GmmEntropyModel:
    """Fit one mixture by minibatch NLL descent with early stopping.

    A seeded 90/10 train/val split is carved out of `samples` internally;
    callers that already hold split tables should slice first and pass the
    train portion both ways.
    """
    if cfg is None:
        cfg = TrainConfig(max_epochs=80)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError("fit expects (N, d) samples")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x6D6D]))
    order = rng.permutation(samples.shape[0])
    n_val = max(1, samples.shape[0] // 10)
    val = samples[order[:n_val]]
    tr = samples[order[n_val:]]
    model = init_gmm(tr, k, rng)
    train(model, (tr,), nll_loss, cfg, (val,))
    effective = softplus(np.diagonal(model.raw_scales, axis1=1, axis2=2))
    if np.any(effective < 2 * DIAG_FLOOR):
        warnings.warn("fitted covariance diagonal near the softplus floor",
                      RuntimeWarning, stacklevel=2)
    return model


# ---------------------------------------------------------------------------
# Checkpoints

GMM_MAGIC = b"MIGM"
GMM_VERSION = 1
_GMM_HEADER = struct.Struct("<4sHII")


def save_gmm(model: GmmEntropyModel, dest: str | BinaryIO) -> None:
    payload = bytearray()
    payload += _GMM_HEADER.pack(GMM_MAGIC, GMM_VERSION, model.k, model.dim)
    payload += model.logits.astype("<f4").tobytes()
    payload += model.means.astype("<f4").tobytes()
    payload += model.raw_scales.astype("<f4").tobytes()
    if isinstance(dest, str):
        with open(dest, "wb") as fh:
            fh.write(payload)
    else:
        dest.write(payload)


def load_gmm(src: str | BinaryIO) -> GmmEntropyModel:
    if isinstance(src, str):
        with open(src, "rb") as fh:
            return load_gmm(fh)
    head = src.read(_GMM_HEADER.size)
    if len(head) < 4 or head[:4] != GMM_MAGIC:
        raise ValueError("bad magic: not a mixture checkpoint")
    _, version, k, d = _GMM_HEADER.unpack(head)
    if version != GMM_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    logits = np.frombuffer(src.read(4 * k), dtype="<f4").astype(np.float64)
    means = np.frombuffer(src.read(4 * k * d), dtype="<f4").astype(np.float64)
    raw = np.frombuffer(src.read(4 * k * d * d), dtype="<f4").astype(np.float64)
    return GmmEntropyModel(logits, means.reshape(k, d), raw.reshape(k, d, d))
