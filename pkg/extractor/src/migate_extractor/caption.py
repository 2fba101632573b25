"""Caption backends and the (captioner, sample_id)-keyed cache.

StatCaptioner is a deterministic local describer used for fixtures and
smoke tests. RemoteCaptioner wraps any transport callable (an HTTP client,
a local model server) with bounded retries and exponential backoff; tests
inject flaky transports and a recording sleeper.
"""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image


class CaptionFailure(Exception):
    """A captioner gave up on one sample (after retries where applicable)."""


class StatCaptioner:
    """Describes an image by its measured statistics; fully deterministic."""

    identifier = "stat"

    def caption(self, image: Image.Image) -> str:
        rgb = np.asarray(image.convert("RGB"), dtype=np.float64)
        brightness = rgb.mean() / 255.0
        channel = ("red", "green", "blue")[int(np.argmax(rgb.mean(axis=(0, 1))))]
        tone = ("a dark", "a mid-tone", "a bright")[
            0 if brightness < 0.33 else (1 if brightness < 0.66 else 2)]
        w, h = image.size
        return (f"{tone} {w}x{h} image, mean brightness "
                f"{brightness:.2f}, dominant channel {channel}")


class RemoteCaptioner:
    """Captions through transport(endpoint, image) with retry + backoff.

    Transport failures are retried up to max_retries times; the delay
    doubles each attempt starting at backoff_s. After the last failure the
    sample fails with CaptionFailure (callers record an error row, they do
    not abort the batch).
    """

    def __init__(self, endpoint: str, transport, max_retries: int = 3,
                 backoff_s: float = 0.5, sleep=None):
        import time
        self.endpoint = endpoint
        self.transport = transport
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.sleep = sleep if sleep is not None else time.sleep
        self.identifier = f"remote:{endpoint}"

    def caption(self, image: Image.Image) -> str:
        delay = self.backoff_s
        last = None
        for attempt in range(self.max_retries + 1):
            try:
                return str(self.transport(self.endpoint, image))
            except Exception as exc:
                last = exc
                if attempt < self.max_retries:
                    self.sleep(delay)
                    delay *= 2.0
        raise CaptionFailure(f"{self.endpoint}: {last}") from last


class CaptionCache:
    """Append-only JSONL cache keyed by (captioner identifier, sample_id)."""

    def __init__(self, path: str):
        self.path = path
        self._store: dict[tuple[str, str], str] = {}
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    row = json.loads(line)
                    self._store[(row["captioner"], row["sample_id"])] = row["caption"]

    def get(self, captioner_id: str, sample_id: str) -> str | None:
        return self._store.get((captioner_id, sample_id))

    def put(self, captioner_id: str, sample_id: str, caption: str) -> None:
        self._store[(captioner_id, sample_id)] = caption
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"captioner": captioner_id,
                                 "sample_id": sample_id,
                                 "caption": caption}, ensure_ascii=False) + "\n")


def get_captioner(identifier: str, transport=None):
    """Resolve "stat" or "remote:<endpoint>" (the latter needs a transport)."""
    if identifier == "stat":
        return StatCaptioner()
    if identifier.startswith("remote:"):
        endpoint = identifier.split(":", 1)[1]
        if transport is None:
            raise CaptionFailure(f"remote captioner {endpoint!r} needs a transport")
        return RemoteCaptioner(endpoint, transport)
    raise CaptionFailure(f"unknown captioner {identifier!r}")
