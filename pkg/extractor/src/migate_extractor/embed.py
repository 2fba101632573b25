"""Dual-encoder backends producing fixed-width float32 embeddings.

The only built-in backend is a deterministic hashed encoder: images are
downsampled to an 8x8 luma grid and projected through a seed-frozen random
matrix, texts are character-trigram feature-hashed with signed buckets.
It stands in for a pretrained dual encoder where none can be downloaded;
anything exposing encode_images/encode_texts with a fixed dim slots into
the same registry.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

_GRID = 8  # luma thumbnail edge; 64 raw pixel features before projection


class EncoderError(Exception):
    """Unknown encoder identifier or backend misconfiguration."""


class HashedDualEncoder:
    """Deterministic stand-in encoder with a configurable output width."""

    def __init__(self, dim: int = 64):
        if dim <= 0:
            raise EncoderError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.identifier = f"hashed-{dim}"
        # One frozen projection per width so reruns are byte-identical.
        rng = np.random.default_rng(np.random.SeedSequence([0x5EED, dim]))
        self._proj = rng.standard_normal((_GRID * _GRID, dim)) / np.sqrt(dim)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        out = np.zeros((len(images), self.dim), dtype=np.float32)
        for i, img in enumerate(images):
            luma = img.convert("L").resize((_GRID, _GRID), Image.BILINEAR)
            grid = np.asarray(luma, dtype=np.float64).reshape(-1) / 255.0
            out[i] = (grid @ self._proj).astype(np.float32)
        return out

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            padded = f"\x02{text}\x03"
            vec = np.zeros(self.dim, dtype=np.float64)
            for j in range(len(padded) - 2):
                gram = padded[j:j + 3].encode("utf-8")
                digest = hashlib.sha256(gram).digest()
                bucket = int.from_bytes(digest[:4], "big") % self.dim
                sign = 1.0 if digest[4] & 1 else -1.0
                vec[bucket] += sign
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec /= norm
            out[i] = vec.astype(np.float32)
        return out


def get_encoder(identifier: str):
    """Resolve an encoder identifier like "hashed-64"."""
    if identifier.startswith("hashed-"):
        try:
            dim = int(identifier.split("-", 1)[1])
        except ValueError as exc:
            raise EncoderError(f"bad encoder identifier {identifier!r}") from exc
        return HashedDualEncoder(dim)
    raise EncoderError(f"unknown encoder {identifier!r}; "
                       f"built-in backends: hashed-<dim>")
