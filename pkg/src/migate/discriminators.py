"""Label discriminators for the ambiguity side of the decomposition.

Three independent classifiers share one training loop: one per modality and
one on the concatenated pair. Each is a 512-512 relu net emitting logits; the
training objective is the plain sum of the three cross entropies evaluated on
identical minibatches, and early stopping watches the summed validation loss.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import feature_store as fs
from .nn import DenseNet, TrainConfig, TrainHistory, logsumexp, save_net, load_net, subseed, train

HIDDEN_WIDTH = 512
LOG_PRIOR_FLOOR = -30.0
HEADS = ("V", "T", "J")


@dataclass
class ClassPrior:
    probabilities: np.ndarray

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        total = self.probabilities.sum()
        if not np.isclose(total, 1.0, atol=1e-9):
            raise ValueError(f"prior sums to {total}, expected 1")
        if np.any(self.probabilities < 0):
            raise ValueError("negative prior probability")

    def log_probabilities(self) -> np.ndarray:
        """Log prior with empty classes clamped to a -30 nat floor."""
        with np.errstate(divide="ignore"):
            logs = np.log(self.probabilities)
        return np.maximum(logs, LOG_PRIOR_FLOOR)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"probabilities": self.probabilities.tolist()}, fh)

    @classmethod
    def load(cls, path: str) -> "ClassPrior":
        with open(path, encoding="utf-8") as fh:
            return cls(np.asarray(json.load(fh)["probabilities"]))


def class_prior(labels, n_classes: int) -> ClassPrior:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot take a prior over zero labels")
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    return ClassPrior(counts / counts.sum())


class DiscriminatorSet:
    """net_V, net_T, net_J with a shared parameter list for joint training."""

    def __init__(self, net_v: DenseNet, net_t: DenseNet, net_j: DenseNet,
                 record_batches: bool = False):
        self.net_v = net_v
        self.net_t = net_t
        self.net_j = net_j
        self.record_batches = record_batches
        self.batch_trace: dict[str, list[str]] = {h: [] for h in HEADS}

    @classmethod
    def init(cls, d_v: int, d_t: int, n_classes: int, seed: int,
             record_batches: bool = False) -> "DiscriminatorSet":
        nets = []
        for i, d_in in enumerate((d_v, d_t, d_v + d_t)):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD15C, i]))
            nets.append(DenseNet.init((d_in, HIDDEN_WIDTH, HIDDEN_WIDTH, n_classes),
                                      ("relu", "relu", "identity"), rng))
        return cls(*nets, record_batches=record_batches)

    def net(self, which: str) -> DenseNet:
        return {"V": self.net_v, "T": self.net_t, "J": self.net_j}[which]

    def parameters(self) -> list[np.ndarray]:
        return (self.net_v.parameters() + self.net_t.parameters()
                + self.net_j.parameters())

    def loss_and_grads(self, batch, grads: bool = True):
        """Summed cross entropy over the three heads on one minibatch.

        batch = (ids, X_V, X_T, y); ids exist so tests can assert the heads
        saw identical minibatch sequences.
        """
        ids, x_v, x_t, y = batch
        x_j = np.concatenate([x_v, x_t], axis=1)
        digest = None
        if self.record_batches:
            digest = hashlib.sha256(np.ascontiguousarray(ids).tobytes()).hexdigest()
        total = 0.0
        all_grads: list[np.ndarray] = []
        for head, net, x in (("V", self.net_v, x_v), ("T", self.net_t, x_t),
                             ("J", self.net_j, x_j)):
            if digest is not None:
                self.batch_trace[head].append(digest)
            logits, caches = net.forward_cached(x)
            shifted = logits - logits.max(axis=1, keepdims=True)
            log_z = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
            n = len(y)
            total += float(np.mean(log_z - logits[np.arange(n), y]))
            if grads:
                soft = np.exp(shifted)
                soft /= soft.sum(axis=1, keepdims=True)
                soft[np.arange(n), y] -= 1.0
                g, _ = net.backward(caches, soft / n)
                all_grads.extend(g)
        return total, (all_grads if grads else None)


@dataclass
class DiscriminatorResult:
    model: DiscriminatorSet
    history: TrainHistory = field(default_factory=TrainHistory)


def train_set(table: fs.FeatureTable, cfg: TrainConfig | None = None,
              record_batches: bool = False) -> DiscriminatorResult:
    """Train the three heads simultaneously on the table's train/val splits."""
    if cfg is None:
        cfg = TrainConfig(max_epochs=30)
    _, splits, x_v, x_t, y = table.arrays()
    splits = np.asarray(splits)
    tr = splits == "train"
    va = splits == "val"
    if not tr.any() or not va.any():
        raise ValueError("need non-empty train and val splits")
    model = DiscriminatorSet.init(table.d_v, table.d_t, table.n_classes,
                                  seed=subseed(cfg.seed, "init"),
                                  record_batches=record_batches)
    x_v = x_v.astype(np.float64)
    x_t = x_t.astype(np.float64)
    train_data = (np.arange(int(tr.sum())), x_v[tr], x_t[tr], y[tr])
    val_data = (np.arange(int(va.sum())), x_v[va], x_t[va], y[va])
    history = train(model, train_data, DiscriminatorSet.loss_and_grads, cfg, val_data)
    return DiscriminatorResult(model=model, history=history)


def log_posterior(dset: DiscriminatorSet, which: str, x: np.ndarray) -> np.ndarray:
    """Log-softmax over classes from the requested head; rows sum to one."""
    if which not in HEADS:
        raise ValueError(f"head must be one of {HEADS}")
    logits = dset.net(which).forward(x)
    squeeze = logits.ndim == 1
    if squeeze:
        logits = logits[None, :]
    out = logits - logsumexp(logits, axis=1)[:, None]
    return out[0] if squeeze else out


def save_set(dset: DiscriminatorSet, prior: ClassPrior, directory: str) -> None:
    """One checkpoint file per head plus the prior as JSON."""
    import os
    os.makedirs(directory, exist_ok=True)
    for head in HEADS:
        save_net(dset.net(head), os.path.join(directory, f"net_{head.lower()}.minn"))
    prior.save(os.path.join(directory, "prior.json"))


def load_set(directory: str) -> tuple[DiscriminatorSet, ClassPrior]:
    import os
    nets = [load_net(os.path.join(directory, f"net_{h.lower()}.minn")) for h in HEADS]
    prior = ClassPrior.load(os.path.join(directory, "prior.json"))
    return DiscriminatorSet(*nets), prior
