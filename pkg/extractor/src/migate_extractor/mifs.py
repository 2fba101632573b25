"""Writer (and verifying reader) for the binary feature-table interchange.

Layout, little-endian throughout:

    header: magic b"MIFS" | version u16 | N u64 | d_V u32 | d_T u32 | C u32
    record: id_len u32 | id utf-8 | split u8 | x_V f32*d_V | x_T f32*d_T | y u32

Split bytes are 0=train, 1=val, 2=test. The writer is a pure function of
its inputs, so re-extracting an unchanged dataset with a deterministic
encoder reproduces the file byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"MIFS"
VERSION = 1
SPLITS = ("train", "val", "test")
_SPLIT_CODE = {name: i for i, name in enumerate(SPLITS)}
_HEADER = struct.Struct("<4sHQIII")


class TableFormatError(Exception):
    """The stream is not a feature table we can produce or parse."""


@dataclass
class TableRow:
    sample_id: str
    split: str
    x_v: np.ndarray
    x_t: np.ndarray
    y: int


def write_table(path: str, rows: list[TableRow], d_v: int, d_t: int,
                n_classes: int) -> int:
    """Serialize rows in order; returns bytes written."""
    if d_v <= 0 or d_t <= 0 or n_classes <= 0:
        raise TableFormatError("dimensions and class count must be positive")
    seen = set()
    payload = bytearray()
    payload += _HEADER.pack(MAGIC, VERSION, len(rows), d_v, d_t, n_classes)
    for row in rows:
        if row.sample_id in seen:
            raise TableFormatError(f"duplicate sample_id {row.sample_id!r}")
        seen.add(row.sample_id)
        if row.split not in _SPLIT_CODE:
            raise TableFormatError(f"{row.sample_id}: bad split {row.split!r}")
        x_v = np.ascontiguousarray(row.x_v, dtype="<f4")
        x_t = np.ascontiguousarray(row.x_t, dtype="<f4")
        if x_v.shape != (d_v,) or x_t.shape != (d_t,):
            raise TableFormatError(f"{row.sample_id}: feature shape mismatch")
        if not (np.isfinite(x_v).all() and np.isfinite(x_t).all()):
            raise TableFormatError(f"{row.sample_id}: non-finite features")
        if not 0 <= row.y < n_classes:
            raise TableFormatError(f"{row.sample_id}: label {row.y} outside "
                                   f"[0, {n_classes})")
        sid = row.sample_id.encode("utf-8")
        payload += struct.pack("<I", len(sid))
        payload += sid
        payload += struct.pack("<B", _SPLIT_CODE[row.split])
        payload += x_v.tobytes()
        payload += x_t.tobytes()
        payload += struct.pack("<I", row.y)
    with open(path, "wb") as fh:
        fh.write(payload)
    return len(payload)


def read_table(path: str):
    """Parse a table back into (d_v, d_t, n_classes, rows); verification aid."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise TableFormatError("truncated header")
        magic, version, n, d_v, d_t, n_classes = _HEADER.unpack(head)
        if magic != MAGIC:
            raise TableFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise TableFormatError(f"unsupported version {version}")
        rows = []
        for _ in range(n):
            (id_len,) = struct.unpack("<I", fh.read(4))
            sid = fh.read(id_len).decode("utf-8")
            (split_code,) = struct.unpack("<B", fh.read(1))
            x_v = np.frombuffer(fh.read(4 * d_v), dtype="<f4")
            x_t = np.frombuffer(fh.read(4 * d_t), dtype="<f4")
            (y,) = struct.unpack("<I", fh.read(4))
            rows.append(TableRow(sid, SPLITS[split_code], x_v, x_t, y))
        if fh.read(1):
            raise TableFormatError("trailing bytes after final record")
    return d_v, d_t, n_classes, rows
