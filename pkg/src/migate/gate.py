"""Interaction-gated caption augmentation.

Samples whose pointwise decomposition is dominated by visual uniqueness get a
caption appended to their text; everyone else passes through untouched. Tier
values come from salted SHA-256 over the sample id, mapped to [0, 1), so
selections are deterministic, order-independent, and nested across budgets:
the 25% selection is a subset of the 50% selection for the same salt.

Two modes:
  interaction_gated: rank the u_V-dominant samples by tier and keep the
      k = min(floor(tau * N), |valid|) smallest.
  uniform_tier: ignore the decomposition; keep every sample whose tier value
      falls below tau (binomial count, used for forced-caption controls).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import feature_store as fs
from .pid import PointwiseDecomposition

log = logging.getLogger("migate.gate")

MODES = ("interaction_gated", "uniform_tier")
CAPTION_SEPARATOR = "\n"


class GateError(RuntimeError):
    def __init__(self, failed_ids: Sequence[str]):
        self.failed_ids = list(failed_ids)
        super().__init__(f"caption provider failed for all {len(self.failed_ids)} "
                         f"requested samples: {self.failed_ids[:5]}...")


class CaptionError(RuntimeError):
    """A caption provider could not produce a caption for one sample."""


@dataclass
class GateConfig:
    tau: float
    mode: str = "interaction_gated"
    hash_salt: str = ""

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau={self.tau} outside [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def hash_u64(sample_id: str, salt: str = "") -> int:
    digest = hashlib.sha256(salt.encode("utf-8") + sample_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def hash_unit(sample_id: str, salt: str = "") -> float:
    """Uniform-looking value in [0, 1) from the salted id hash."""
    return hash_u64(sample_id, salt) / 2.0 ** 64


class CaptionProvider(Protocol):
    provider_id: str

    def caption(self, sample_id: str, visual) -> str: ...


class MemoizingProvider:
    """Caches captions by (provider_id, sample_id) across calls and runs."""

    def __init__(self, inner: CaptionProvider):
        self.inner = inner
        self.provider_id = inner.provider_id
        self.cache: dict[tuple[str, str], str] = {}
        self.calls = 0

    def caption(self, sample_id: str, visual) -> str:
        key = (self.provider_id, sample_id)
        if key not in self.cache:
            self.calls += 1
            self.cache[key] = self.inner.caption(sample_id, visual)
        return self.cache[key]


class FileCaptionProvider:
    """Captions read from a JSONL file of {sample_id, caption} rows.

    Rows carrying an "error" key (or missing ids) raise CaptionError, which
    run_gate treats as a per-sample failure.
    """

    def __init__(self, path: str):
        self.provider_id = f"file:{path}"
        self.captions: dict[str, str] = {}
        self.errors: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                if row.get("caption") is not None:
                    self.captions[row["sample_id"]] = row["caption"]
                elif "error" in row:
                    self.errors[row["sample_id"]] = row["error"]

    def caption(self, sample_id: str, visual) -> str:
        if sample_id in self.captions:
            return self.captions[sample_id]
        reason = self.errors.get(sample_id, "no caption on file")
        raise CaptionError(f"{sample_id}: {reason}")


@dataclass
class ManifestEntry:
    sample_id: str
    selected: bool
    tier: float
    caption: str | None
    augmented_text: str


@dataclass
class AugmentedManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def selected_ids(self) -> list[str]:
        return [e.sample_id for e in self.entries if e.selected]

    def to_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps({
                    "sample_id": e.sample_id, "selected": e.selected,
                    "tier": e.tier, "caption": e.caption,
                    "augmented_text": e.augmented_text,
                }, ensure_ascii=False) + "\n")

    @classmethod
    def from_jsonl(cls, path: str) -> "AugmentedManifest":
        manifest = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                manifest.entries.append(ManifestEntry(
                    row["sample_id"], row["selected"], row["tier"],
                    row["caption"], row["augmented_text"]))
        return manifest


def select_valid(decomp: PointwiseDecomposition) -> list[str]:
    """Ids whose u_V ties or beats every other pointwise component."""
    u_v = decomp.u_v
    top = (u_v >= decomp.r) & (u_v >= decomp.u_t) & (u_v >= decomp.s)
    return [sid for sid, keep in zip(decomp.sample_ids, top) if keep]


def choose_caption_set(valid_ids: Sequence[str], n_total: int, tau: float,
                       tiers: dict[str, float]) -> list[str]:
    """k = min(floor(tau*N), |valid|) ids with the smallest tier values.

    Tier ties break lexicographically on the id so the choice is total.
    """
    k = min(math.floor(tau * n_total), len(valid_ids))
    ranked = sorted(valid_ids, key=lambda sid: (tiers[sid], sid))
    return ranked[:k]


def run_gate(table: fs.FeatureTable, texts: Sequence[fs.TextManifestRecord],
             decomp: PointwiseDecomposition | None, cfg: GateConfig,
             provider: CaptionProvider) -> AugmentedManifest:
    """Select, caption, and augment; emits one manifest entry per table row.

    Per-sample provider failures demote the sample to unselected (logged);
    if every requested caption fails the whole run raises GateError.
    """
    text_by_id = fs.manifest_index(texts)
    ids = table.sample_ids()
    missing = [sid for sid in ids if sid not in text_by_id]
    if missing:
        raise ValueError(f"text manifest missing {len(missing)} ids, "
                         f"first {missing[:3]}")
    tiers = {sid: hash_unit(sid, cfg.hash_salt) for sid in ids}
    if cfg.mode == "interaction_gated":
        if decomp is None:
            raise ValueError("interaction_gated mode needs a decomposition")
        valid = select_valid(decomp)
        valid = [sid for sid in valid if sid in text_by_id]
        chosen = choose_caption_set(valid, len(ids), cfg.tau, tiers)
    else:
        valid = list(ids)
        chosen = [sid for sid in ids if tiers[sid] < cfg.tau]
    record_by_id = {rec.sample_id: rec for rec in table.records}
    captions: dict[str, str] = {}
    failed: list[str] = []
    for sid in chosen:
        try:
            captions[sid] = provider.caption(sid, record_by_id[sid].x_v)
        except CaptionError as exc:
            log.warning("caption failed for %s: %s", sid, exc)
            failed.append(sid)
    if chosen and not captions:
        raise GateError(failed)
    manifest = AugmentedManifest()
    for sid in ids:
        text = text_by_id[sid].text
        caption = captions.get(sid)
        selected = caption is not None
        augmented = text + CAPTION_SEPARATOR + caption if selected else text
        manifest.entries.append(ManifestEntry(sid, selected, tiers[sid],
                                              caption, augmented))
    log.info("gate: %d/%d valid, %d captioned (tau=%.3f, mode=%s)",
             len(valid), len(ids), len(captions), cfg.tau, cfg.mode)
    return manifest


def mixture_weights(counts: Sequence[float], temperature: float = 0.5) -> np.ndarray:
    """Sampling weights W_i = N_i ** temperature for dataset mixing."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts <= 0):
        raise ValueError("dataset sizes must be positive")
    return counts ** temperature
