"""Deterministic image and text corruption at graded severities.

Images run through three noise families (gaussian, shot, impulse) with five
calibrated severity levels extended monotonically to ten. Text runs through
character insertions, drops, and replacements at five rates, guarded by a
fidelity loop: a corruption is accepted only if a similarity oracle scores it
at least 0.2 against the original; after 100 fresh attempts the sample is
excluded rather than corrupted (exclusion is an outcome, not an error).

Every operation derives its randomness from an explicit seed so that reruns
and parallel schedules produce identical bytes.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np
from PIL import Image

from .gate import hash_u64

SIMILARITY_THRESHOLD = 0.2
MAX_ATTEMPTS = 100
IMAGE_KINDS = ("gaussian", "shot", "impulse")
TEXT_KINDS = ("insert", "drop", "replace")
_KIND_CODE = {k: i for i, k in enumerate(IMAGE_KINDS + TEXT_KINDS)}

# Printable ASCII, space excluded: injected characters should be visible.
_CHAR_POOL = [chr(c) for c in range(33, 127)]


class Excluded:
    """Sentinel outcome: fidelity could not be preserved within the budget."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Excluded"

    def __bool__(self):
        return False


EXCLUDED = Excluded()


# ---------------------------------------------------------------------------
# Severity tables

def _extend_linear(base: list[float]) -> list[float]:
    step = base[-1] - base[-2]
    out = list(base)
    for _ in range(5):
        out.append(out[-1] + step)
    return out


def _shot_lambdas() -> list[float]:
    # Linear extrapolation of lambda itself goes non-positive at level 7, so
    # levels 6-10 extend the final increment in 1/lambda (the variance scale).
    base = [60.0, 25.0, 12.0, 5.0, 3.0]
    inv = [1.0 / v for v in base]
    inv = _extend_linear(inv)
    return [1.0 / v for v in inv]


SEVERITY = {
    "gaussian": _extend_linear([0.08, 0.12, 0.18, 0.26, 0.38]),
    "shot": _shot_lambdas(),
    "impulse": _extend_linear([0.03, 0.06, 0.09, 0.17, 0.27]),
}

TEXT_RATES = [0.025, 0.05, 0.10, 0.15, 0.25]


def severity_parameter(kind: str, level: int) -> float:
    if kind not in SEVERITY:
        raise ValueError(f"unknown image corruption {kind!r}")
    if not 1 <= level <= 10:
        raise ValueError(f"level {level} outside [1, 10]")
    return SEVERITY[kind][level - 1]


def text_rate(level: int) -> float:
    if not 1 <= level <= 5:
        raise ValueError(f"text level {level} outside [1, 5]")
    return TEXT_RATES[level - 1]


# ---------------------------------------------------------------------------
# Images

@dataclass
class ImageBuffer:
    """8-bit image, row-major, 1 (grayscale) or 3 (RGB) channels."""

    pixels: np.ndarray  # (H, W, C) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3), got {px.shape}")
        self.pixels = np.ascontiguousarray(px, dtype=np.uint8)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @classmethod
    def from_png(cls, path: str) -> "ImageBuffer":
        with Image.open(path) as img:
            mode = "L" if img.mode in ("L", "1", "I;16") else "RGB"
            arr = np.asarray(img.convert(mode))
        return cls(arr)

    def to_png(self, path: str) -> None:
        arr = self.pixels[:, :, 0] if self.channels == 1 else self.pixels
        Image.fromarray(arr).save(path, format="PNG")


def _corruption_rng(seed: int, kind: str, level: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), _KIND_CODE[kind], int(level)]))


def _requantize(unit: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(unit, 0.0, 1.0) * 255.0).astype(np.uint8)


def gaussian_noise(image: ImageBuffer, level: int, seed: int) -> ImageBuffer:
    sigma = severity_parameter("gaussian", level)
    rng = _corruption_rng(seed, "gaussian", level)
    unit = image.pixels.astype(np.float64) / 255.0
    unit = unit + rng.normal(0.0, sigma, size=unit.shape)
    return ImageBuffer(_requantize(unit))


def shot_noise(image: ImageBuffer, level: int, seed: int) -> ImageBuffer:
    lam = severity_parameter("shot", level)
    rng = _corruption_rng(seed, "shot", level)
    unit = image.pixels.astype(np.float64) / 255.0
    unit = rng.poisson(unit * lam).astype(np.float64) / lam
    return ImageBuffer(_requantize(unit))


def impulse_noise(image: ImageBuffer, level: int, seed: int) -> ImageBuffer:
    fraction = severity_parameter("impulse", level)
    rng = _corruption_rng(seed, "impulse", level)
    pixels = image.pixels.copy()
    hit = rng.random(pixels.shape[:2]) < fraction
    salt = rng.random(pixels.shape[:2]) < 0.5
    value = np.where(salt, 255, 0).astype(np.uint8)
    pixels[hit] = value[hit][:, None]
    return ImageBuffer(pixels)


IMAGE_OPS = {"gaussian": gaussian_noise, "shot": shot_noise, "impulse": impulse_noise}


def corrupt_image(image: ImageBuffer, kind: str, level: int, seed: int) -> ImageBuffer:
    if kind not in IMAGE_OPS:
        raise ValueError(f"unknown image corruption {kind!r}")
    return IMAGE_OPS[kind](image, level, seed)


# ---------------------------------------------------------------------------
# Text

class SimilarityOracle(Protocol):
    def similarity(self, a: str, b: str) -> float: ...


def _trigrams(text: str) -> Counter:
    if len(text) < 3:
        return Counter({text: 1}) if text else Counter()
    return Counter(text[i:i + 3] for i in range(len(text) - 2))


def ngram_cosine(a: str, b: str) -> float:
    """Cosine similarity of character-trigram count vectors.

    Two empty strings are identical (1.0); empty against non-empty shares
    nothing (0.0).
    """
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    ca, cb = _trigrams(a), _trigrams(b)
    dot = sum(ca[g] * cb[g] for g in ca.keys() & cb.keys())
    norm = math.sqrt(sum(v * v for v in ca.values()))
    norm *= math.sqrt(sum(v * v for v in cb.values()))
    if norm == 0.0:
        return 0.0
    return dot / norm


class TrigramOracle:
    """Default fidelity oracle backed by ngram_cosine."""

    def similarity(self, a: str, b: str) -> float:
        return ngram_cosine(a, b)


def _apply_text_op(text: str, op: str, count: int, rng: np.random.Generator) -> str:
    positions = sorted(rng.choice(len(text), size=count, replace=False).tolist(),
                       reverse=True)
    chars = list(text)
    if op == "insert":
        for pos in positions:
            chars.insert(pos, _CHAR_POOL[rng.integers(0, len(_CHAR_POOL))])
    elif op == "drop":
        for pos in positions:
            del chars[pos]
    else:  # replace
        for pos in positions:
            old = chars[pos]
            new = old
            while new == old:
                new = _CHAR_POOL[rng.integers(0, len(_CHAR_POOL))]
            chars[pos] = new
    return "".join(chars)


@dataclass
class TextCorruptionOutcome:
    result: str | Excluded
    attempts: int

    @property
    def excluded(self) -> bool:
        return isinstance(self.result, Excluded)


def corrupt_text(text: str, op: str, level: int, seed: int,
                 oracle: SimilarityOracle | None = None) -> TextCorruptionOutcome:
    """Corrupt ceil(rate * len) character positions, preserving fidelity.

    Attempts draw fresh randomness from one seeded stream; each is accepted
    only if oracle.similarity(original, corrupted) >= 0.2. After 100 failed
    attempts the outcome carries the EXCLUDED sentinel.
    """
    if op not in TEXT_KINDS:
        raise ValueError(f"unknown text corruption {op!r}")
    if not text:
        raise ValueError("cannot corrupt empty text")
    if oracle is None:
        oracle = TrigramOracle()
    rate = text_rate(level)
    count = math.ceil(rate * len(text))
    rng = _corruption_rng(seed, op, level)
    for attempt in range(1, MAX_ATTEMPTS + 1):
        candidate = _apply_text_op(text, op, count, rng)
        if oracle.similarity(text, candidate) >= SIMILARITY_THRESHOLD:
            return TextCorruptionOutcome(candidate, attempt)
    return TextCorruptionOutcome(EXCLUDED, MAX_ATTEMPTS)


# ---------------------------------------------------------------------------
# Ledger

@dataclass
class LedgerEntry:
    sample_id: str
    kind: str
    level: int
    attempts: int
    excluded: bool


def write_ledger(entries: Iterable[LedgerEntry], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps({
                "sample_id": e.sample_id, "kind": e.kind, "level": e.level,
                "attempts": e.attempts, "excluded": e.excluded,
            }) + "\n")


def read_ledger(path: str) -> list[LedgerEntry]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            out.append(LedgerEntry(row["sample_id"], row["kind"], row["level"],
                                   row["attempts"], row["excluded"]))
    return out


def sample_seed(sample_id: str, kind: str, level: int, salt: str = "") -> int:
    """Per-sample corruption seed: hash of id, kind, and level (salted)."""
    return hash_u64(f"{sample_id}\x1f{kind}\x1f{level}", salt=salt)
