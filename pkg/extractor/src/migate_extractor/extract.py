"""Job runners: dataset index -> feature table, image manifest -> captions.

The dataset index is JSONL, one sample per line:

    {"sample_id": "...", "image": "relative/path.png", "text": "...",
     "label": 0, "split": "train"}

Image paths resolve relative to the index file. Extraction preserves index
order; a sample whose image fails to decode is skipped and recorded in
skips.jsonl rather than aborting the run.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .caption import CaptionCache, CaptionFailure
from .embed import get_encoder
from .mifs import SPLITS, TableRow, write_table


class JobError(Exception):
    """The job description itself is unusable (missing files, bad fields)."""


@dataclass
class ExtractionJob:
    index_path: str
    out_dir: str
    encoder: str = "hashed-64"
    batch_size: int = 32
    device: str = "cpu"  # hint only; the hashed backend ignores it
    n_classes: int | None = None  # default: 1 + max label in the index

    def __post_init__(self):
        if self.batch_size <= 0:
            raise JobError("batch_size must be positive")


@dataclass
class CaptionJob:
    index_path: str
    out_path: str
    captioner: str = "stat"
    cache_path: str | None = None


@dataclass
class ExtractionSummary:
    n_written: int
    n_skipped: int
    d_v: int
    d_t: int
    table_path: str
    texts_path: str
    skips_path: str


def read_index(index_path: str) -> list[dict]:
    if not os.path.exists(index_path):
        raise JobError(f"index not found: {index_path}")
    entries = []
    base = os.path.dirname(os.path.abspath(index_path))
    with open(index_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            for key in ("sample_id", "image", "text"):
                if key not in row:
                    raise JobError(f"index line {line_no}: missing {key!r}")
            row["image"] = os.path.join(base, row["image"])
            entries.append(row)
    return entries


def _load_image(path: str) -> Image.Image:
    with Image.open(path) as img:
        img.load()
        return img.convert("RGB")


def run_extraction(job: ExtractionJob) -> ExtractionSummary:
    """Embed every decodable sample and write the three output files."""
    entries = read_index(job.index_path)
    encoder = get_encoder(job.encoder)
    os.makedirs(job.out_dir, exist_ok=True)

    kept: list[dict] = []
    images: list[Image.Image] = []
    skips: list[dict] = []
    for row in entries:
        split = row.get("split", "train")
        if split not in SPLITS:
            raise JobError(f"{row['sample_id']}: bad split {split!r}")
        try:
            images.append(_load_image(row["image"]))
        except (OSError, UnidentifiedImageError) as exc:
            skips.append({"sample_id": row["sample_id"], "stage": "decode",
                          "error": str(exc)})
            continue
        kept.append(row)

    x_v = np.zeros((len(kept), encoder.dim), dtype=np.float32)
    x_t = np.zeros((len(kept), encoder.dim), dtype=np.float32)
    for start in range(0, len(kept), job.batch_size):
        stop = min(start + job.batch_size, len(kept))
        x_v[start:stop] = encoder.encode_images(images[start:stop])
        x_t[start:stop] = encoder.encode_texts(
            [row["text"] for row in kept[start:stop]])

    labels = [int(row.get("label", 0)) for row in kept]
    n_classes = job.n_classes
    if n_classes is None:
        n_classes = (max(labels) + 1) if labels else 1
    rows = [TableRow(row["sample_id"], row.get("split", "train"),
                     x_v[i], x_t[i], labels[i])
            for i, row in enumerate(kept)]

    table_path = os.path.join(job.out_dir, "table.mifs")
    write_table(table_path, rows, encoder.dim, encoder.dim, n_classes)

    texts_path = os.path.join(job.out_dir, "texts.jsonl")
    with open(texts_path, "w", encoding="utf-8") as fh:
        for row in kept:
            fh.write(json.dumps({"sample_id": row["sample_id"],
                                 "text": row["text"],
                                 "caption": None}, ensure_ascii=False) + "\n")

    skips_path = os.path.join(job.out_dir, "skips.jsonl")
    with open(skips_path, "w", encoding="utf-8") as fh:
        for entry in skips:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    return ExtractionSummary(len(kept), len(skips), encoder.dim, encoder.dim,
                             table_path, texts_path, skips_path)


def caption_batch(job: CaptionJob, captioner=None) -> tuple[int, int]:
    """Caption every indexed image; returns (n_captioned, n_failed).

    Output rows are {"sample_id", "caption"} on success and
    {"sample_id", "error"} on failure, one per requested sample, in index
    order. A cache path makes repeat runs serve hits without model calls.
    """
    entries = read_index(job.index_path)
    if captioner is None:
        from .caption import get_captioner
        captioner = get_captioner(job.captioner)
    cache = CaptionCache(job.cache_path) if job.cache_path else None

    n_ok = 0
    n_fail = 0
    with open(job.out_path, "w", encoding="utf-8") as fh:
        for row in entries:
            sid = row["sample_id"]
            cached = cache.get(captioner.identifier, sid) if cache else None
            if cached is not None:
                fh.write(json.dumps({"sample_id": sid, "caption": cached},
                                    ensure_ascii=False) + "\n")
                n_ok += 1
                continue
            try:
                image = _load_image(row["image"])
                caption = captioner.caption(image)
            except (OSError, UnidentifiedImageError, CaptionFailure) as exc:
                fh.write(json.dumps({"sample_id": sid, "error": str(exc)},
                                    ensure_ascii=False) + "\n")
                n_fail += 1
                continue
            if cache:
                cache.put(captioner.identifier, sid, caption)
            fh.write(json.dumps({"sample_id": sid, "caption": caption},
                                ensure_ascii=False) + "\n")
            n_ok += 1
    return n_ok, n_fail
