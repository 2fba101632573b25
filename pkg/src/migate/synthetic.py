"""Synthetic logic-gate datasets with known decompositions.

Each sample draws a visual bit and a text bit from one of four gates, embeds
the bits as 2-D one-hot vectors, and adds Gaussian jitter. The jitter vector
is drawn once per sample and added to both modalities (and to any re-encoded
text for the same sample id): marginally each modality is still one-hot plus
isotropic noise, but the per-sample surprisal fluctuations of the two
modalities coincide, so the pointwise min in the decomposition picks the same
modality for the + and - columns and the continuous data reproduces the
discrete oracle exactly instead of drifting by a min-crossover term.

The text side of every sample is a short token string; SyntheticTextEncoder
maps any such string (original or caption-augmented) back to an embedding, so
gate-selected captions can be re-encoded without a learned model.
"""

from __future__ import annotations

import re

import numpy as np

from . import feature_store as fs
from . import gate as gatemod
from .pid import DiscreteJointDistribution

GATES = ("xor", "copy", "unique_v", "unique_v_noise")
DEFAULT_JITTER = 0.05

# All token states a synthetic text can occupy: no bit (constant text),
# a single text bit, or a text bit joined by a captioned visual bit.
_TEXT_STATES = ("blank", "0", "1", "0+0", "0+1", "1+0", "1+1")
_BIT_RE = re.compile(r"bit (\d)")


def sample_eps(seed: int, sample_id: str) -> np.ndarray:
    """Per-sample jitter draw, reproducible from the id alone."""
    rng = np.random.default_rng(gatemod.hash_u64(sample_id, salt=f"eps:{seed}"))
    return rng.standard_normal(2)


def _draw_bits(gate: str, n: int, rng: np.random.Generator):
    if gate not in GATES:
        raise ValueError(f"unknown gate {gate!r}; choose from {GATES}")
    b_v = rng.integers(0, 2, size=n)
    if gate == "copy":
        b_t = b_v.copy()
    elif gate == "unique_v":
        b_t = np.zeros(n, dtype=np.int64)
    else:
        b_t = rng.integers(0, 2, size=n)
    if gate == "xor":
        y = b_v ^ b_t
    else:
        y = b_v.copy()
    return b_v, b_t, y


def _text_for(gate: str, b_t: int) -> str:
    if gate == "unique_v":
        return "blank"
    return f"text bit {b_t}"


def _state_center(state: str) -> np.ndarray:
    """Well-separated 2-D cluster centers, one per token state."""
    idx = _TEXT_STATES.index(state)
    angle = 2.0 * np.pi * idx / len(_TEXT_STATES)
    return 2.0 * np.array([np.cos(angle), np.sin(angle)])


def _text_state(text: str) -> str:
    bits = _BIT_RE.findall(text)
    if not bits:
        return "blank"
    if len(bits) == 1:
        return bits[0]
    return f"{bits[0]}+{bits[-1]}"


class SyntheticTextEncoder:
    """Deterministic text embedder aligned with the table generator.

    Identical token states land on identical cluster centers, and each
    sample reuses its generation-time jitter, so re-encoding an unchanged
    text reproduces the stored features.
    """

    def __init__(self, seed: int, sigma: float = DEFAULT_JITTER):
        self.seed = seed
        self.sigma = sigma

    def encode(self, sample_id: str, text: str) -> np.ndarray:
        center = _state_center(_text_state(text))
        return (center + self.sigma * sample_eps(self.seed, sample_id)).astype(np.float32)


class SyntheticCaptionProvider:
    """Captions a sample with the visual bit decoded from its features."""

    provider_id = "synthetic-visual-bit"

    def caption(self, sample_id: str, visual: np.ndarray) -> str:
        visual = np.asarray(visual, dtype=np.float64)
        bit = int(visual[1] > visual[0])
        return f"image bit {bit}"


def make_gate_table(gate: str, n: int, sigma: float = DEFAULT_JITTER,
                    seed: int = 42):
    """Sample a gate dataset.

    Returns (FeatureTable, list[TextManifestRecord]); splits interleave
    8/1/1 train/val/test by index so every prefix is usable.
    """
    if n < 10:
        raise ValueError("need at least 10 samples to populate all splits")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9A7E]))
    b_v, b_t, y = _draw_bits(gate, n, rng)
    encoder = SyntheticTextEncoder(seed, sigma)
    ids = [f"{gate}-{i:06d}" for i in range(n)]
    splits = []
    x_v = np.empty((n, 2), dtype=np.float32)
    x_t = np.empty((n, 2), dtype=np.float32)
    texts = []
    for i, sid in enumerate(ids):
        eps = sample_eps(seed, sid)
        one_hot = np.zeros(2)
        one_hot[b_v[i]] = 1.0
        x_v[i] = (one_hot + sigma * eps).astype(np.float32)
        text = _text_for(gate, int(b_t[i]))
        x_t[i] = encoder.encode(sid, text)
        texts.append(fs.TextManifestRecord(sid, text))
        mod = i % 10
        splits.append("val" if mod == 8 else "test" if mod == 9 else "train")
    table = fs.table_from_arrays(ids, splits, x_v, x_t, y, n_classes=2)
    return table, texts


def reencode_text(table: fs.FeatureTable, manifest: "gatemod.AugmentedManifest",
                  encoder: SyntheticTextEncoder) -> fs.FeatureTable:
    """Replace x_T with the encoding of each sample's augmented text."""
    by_id = {e.sample_id: e for e in manifest.entries}
    out = fs.FeatureTable(d_v=table.d_v, d_t=2, n_classes=table.n_classes)
    for rec in table.records:
        entry = by_id[rec.sample_id]
        out.records.append(fs.FeatureRecord(
            rec.sample_id, rec.split, rec.x_v,
            encoder.encode(rec.sample_id, entry.augmented_text), rec.y))
    return out


# ---------------------------------------------------------------------------
# Discrete ground truth

def gate_distribution(gate: str) -> DiscreteJointDistribution:
    """Joint (x_V, x_T, y) law of the gate over bit alphabets."""
    if gate not in GATES:
        raise ValueError(f"unknown gate {gate!r}")
    if gate == "unique_v":
        p = np.zeros((2, 1, 2))
        for v in (0, 1):
            p[v, 0, v] = 0.5
        return DiscreteJointDistribution([0, 1], ["blank"], [0, 1], p)
    p = np.zeros((2, 2, 2))
    for v in (0, 1):
        for t in (0, 1):
            y = v ^ t if gate == "xor" else v
            weight = 0.25
            if gate == "copy":
                if t != v:
                    continue
                weight = 0.5
            p[v, t, y] = weight
    return DiscreteJointDistribution([0, 1], [0, 1], [0, 1], p)


def captioned_distribution(gate: str) -> DiscreteJointDistribution:
    """Gate law after every sample's text is augmented with the visual bit.

    The text alphabet becomes the (text bit, visual bit) pair alphabet; for
    unique_v the original text carries no bit, so the pair collapses to the
    visual bit alone.
    """
    base = gate_distribution(gate)
    pairs: list[tuple] = []
    index: dict[tuple, int] = {}
    for it, t_sym in enumerate(base.alphabet_t):
        for iv, v_sym in enumerate(base.alphabet_v):
            key = (t_sym, v_sym)
            if base.p[iv, it].sum() > 0 and key not in index:
                index[key] = len(pairs)
                pairs.append(key)
    p = np.zeros((len(base.alphabet_v), len(pairs), len(base.alphabet_y)))
    for iv in range(len(base.alphabet_v)):
        for it, t_sym in enumerate(base.alphabet_t):
            key = (t_sym, base.alphabet_v[iv])
            if base.p[iv, it].sum() > 0:
                p[iv, index[key]] += base.p[iv, it]
    return DiscreteJointDistribution(base.alphabet_v, pairs, base.alphabet_y, p)
