"""Binary feature tables and text manifests.

A feature table is the hand-off artifact between extraction and estimation:
fixed-dimension float32 embeddings for two modalities plus an integer label,
keyed by a unique sample id and tagged with a split. The on-disk layout is a
little-endian stream:

    header: magic b"MIFS" | version u16 | N u64 | d_V u32 | d_T u32 | C u32
    record: id_len u32 | id utf-8 | split u8 | x_V f32*d_V | x_T f32*d_T | y u32

Split bytes are 0=train, 1=val, 2=test. Round trips are bit-exact: floats are
stored and compared as float32 bit patterns, never re-encoded through text.

Text sides of the same samples travel as JSONL manifests with keys
sample_id / text / caption (caption may be null).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Sequence

import numpy as np

MAGIC = b"MIFS"
VERSION = 1
SPLITS = ("train", "val", "test")
_SPLIT_CODE = {name: i for i, name in enumerate(SPLITS)}
_HEADER = struct.Struct("<4sHQIII")


class StoreError(Exception):
    """Base error for feature-table serialization."""


class FormatError(StoreError):
    """Bad magic or version: the stream is not a feature table."""


class TruncationError(StoreError):
    """Stream ended before the promised record count was read."""


class CorruptionError(StoreError):
    """Structurally read but inconsistent with its header (e.g. trailing bytes)."""


@dataclass
class FeatureRecord:
    sample_id: str
    split: str
    x_v: np.ndarray
    x_t: np.ndarray
    y: int

    def __post_init__(self):
        self.x_v = np.ascontiguousarray(self.x_v, dtype=np.float32)
        self.x_t = np.ascontiguousarray(self.x_t, dtype=np.float32)
        self.y = int(self.y)


@dataclass
class FeatureTable:
    d_v: int
    d_t: int
    n_classes: int
    records: list[FeatureRecord] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.records)

    def sample_ids(self) -> list[str]:
        return [rec.sample_id for rec in self.records]

    def arrays(self):
        """Stack records into (ids, splits, X_V, X_T, y) aligned with table order."""
        ids = [rec.sample_id for rec in self.records]
        splits = [rec.split for rec in self.records]
        if self.records:
            x_v = np.stack([rec.x_v for rec in self.records])
            x_t = np.stack([rec.x_t for rec in self.records])
            y = np.array([rec.y for rec in self.records], dtype=np.int64)
        else:
            x_v = np.zeros((0, self.d_v), dtype=np.float32)
            x_t = np.zeros((0, self.d_t), dtype=np.float32)
            y = np.zeros(0, dtype=np.int64)
        return ids, splits, x_v, x_t, y


@dataclass
class TextManifestRecord:
    sample_id: str
    text: str
    caption: str | None = None


def table_from_arrays(sample_ids, splits, x_v, x_t, y, n_classes) -> FeatureTable:
    x_v = np.asarray(x_v, dtype=np.float32)
    x_t = np.asarray(x_t, dtype=np.float32)
    table = FeatureTable(d_v=x_v.shape[1], d_t=x_t.shape[1], n_classes=int(n_classes))
    for i, sid in enumerate(sample_ids):
        table.records.append(
            FeatureRecord(sid, splits[i], x_v[i], x_t[i], int(y[i]))
        )
    return table


def validate_table(table: FeatureTable) -> list[str]:
    """Check table invariants; returns violation strings (never raises).

    Each violation names the offending sample_id and the rule broken.
    """
    violations = []
    if table.d_v <= 0 or table.d_t <= 0:
        violations.append("<table>: dimensions must be positive")
    if table.n_classes <= 0:
        violations.append("<table>: n_classes must be positive")
    seen: set[str] = set()
    for rec in table.records:
        sid = rec.sample_id
        if not sid:
            violations.append("<empty>: sample_id must be non-empty")
            continue
        if sid in seen:
            violations.append(f"{sid}: duplicate sample_id")
        seen.add(sid)
        if rec.split not in _SPLIT_CODE:
            violations.append(f"{sid}: unknown split {rec.split!r}")
        if rec.x_v.shape != (table.d_v,):
            violations.append(f"{sid}: x_V has shape {rec.x_v.shape}, expected ({table.d_v},)")
        if rec.x_t.shape != (table.d_t,):
            violations.append(f"{sid}: x_T has shape {rec.x_t.shape}, expected ({table.d_t},)")
        if not 0 <= rec.y < table.n_classes:
            violations.append(f"{sid}: label {rec.y} outside [0, {table.n_classes})")
    return violations


def select_split(table: FeatureTable, split: str) -> FeatureTable:
    """Order-preserving partition of the table by split name."""
    if split not in _SPLIT_CODE:
        raise ValueError(f"unknown split {split!r}")
    sub = FeatureTable(d_v=table.d_v, d_t=table.d_t, n_classes=table.n_classes)
    sub.records = [rec for rec in table.records if rec.split == split]
    return sub


def write_table(table: FeatureTable, dest: str | BinaryIO) -> int:
    """Serialize the table; refuses (ValueError) if invariants are violated.

    Returns the number of bytes written. Output is a pure function of the
    table contents, so identical tables produce identical bytes.
    """
    violations = validate_table(table)
    if violations:
        raise ValueError("refusing to write invalid table: " + "; ".join(violations))
    payload = bytearray()
    payload += _HEADER.pack(MAGIC, VERSION, table.n, table.d_v, table.d_t, table.n_classes)
    for rec in table.records:
        sid = rec.sample_id.encode("utf-8")
        payload += struct.pack("<I", len(sid))
        payload += sid
        payload += struct.pack("<B", _SPLIT_CODE[rec.split])
        payload += rec.x_v.astype("<f4", copy=False).tobytes()
        payload += rec.x_t.astype("<f4", copy=False).tobytes()
        payload += struct.pack("<I", rec.y)
    if isinstance(dest, str):
        with open(dest, "wb") as fh:
            fh.write(payload)
    else:
        dest.write(payload)
    return len(payload)


def _read_exact(fh: BinaryIO, count: int, context: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise TruncationError(f"stream ended while reading {context} "
                              f"(wanted {count} bytes, got {len(buf)})")
    return buf


def read_table(src: str | BinaryIO) -> FeatureTable:
    if isinstance(src, str):
        with open(src, "rb") as fh:
            return read_table(fh)
    fh = src
    head = fh.read(_HEADER.size)
    if len(head) < 4 or head[:4] != MAGIC:
        raise FormatError("bad magic: not a feature table")
    if len(head) != _HEADER.size:
        raise TruncationError("stream ended inside the header")
    _, version, n, d_v, d_t, n_classes = _HEADER.unpack(head)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    table = FeatureTable(d_v=d_v, d_t=d_t, n_classes=n_classes)
    for i in range(n):
        ctx = f"record {i}"
        (id_len,) = struct.unpack("<I", _read_exact(fh, 4, ctx + " id length"))
        sid = _read_exact(fh, id_len, ctx + " id").decode("utf-8")
        (split_code,) = struct.unpack("<B", _read_exact(fh, 1, ctx + " split"))
        if split_code >= len(SPLITS):
            raise CorruptionError(f"{ctx}: split byte {split_code} out of range")
        x_v = np.frombuffer(_read_exact(fh, 4 * d_v, ctx + " x_V"), dtype="<f4").copy()
        x_t = np.frombuffer(_read_exact(fh, 4 * d_t, ctx + " x_T"), dtype="<f4").copy()
        (y,) = struct.unpack("<I", _read_exact(fh, 4, ctx + " label"))
        table.records.append(FeatureRecord(sid, SPLITS[split_code], x_v, x_t, y))
    trailing = fh.read(1)
    if trailing:
        raise CorruptionError(f"header promised {n} records but trailing bytes follow")
    return table


def tables_equal(a: FeatureTable, b: FeatureTable) -> bool:
    """Bit-exact comparison (float32 payloads compared as raw bytes)."""
    if (a.d_v, a.d_t, a.n_classes, a.n) != (b.d_v, b.d_t, b.n_classes, b.n):
        return False
    for ra, rb in zip(a.records, b.records):
        if ra.sample_id != rb.sample_id or ra.split != rb.split or ra.y != rb.y:
            return False
        if ra.x_v.tobytes() != rb.x_v.tobytes() or ra.x_t.tobytes() != rb.x_t.tobytes():
            return False
    return True


def write_text_manifest(records: Iterable[TextManifestRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            row = {"sample_id": rec.sample_id, "text": rec.text, "caption": rec.caption}
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_text_manifest(path: str) -> list[TextManifestRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if "sample_id" not in row or "text" not in row:
                raise FormatError(f"manifest line {line_no}: needs sample_id and text")
            out.append(TextManifestRecord(row["sample_id"], row["text"], row.get("caption")))
    return out


def manifest_index(records: Sequence[TextManifestRecord]) -> dict[str, TextManifestRecord]:
    return {rec.sample_id: rec for rec in records}
