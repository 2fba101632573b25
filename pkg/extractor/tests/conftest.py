import json
import os

import numpy as np
import pytest
from PIL import Image

TEXTS = [
    "a red square on a white field",
    "two birds over calm water",
    "the number three painted on brick",
    "an empty parking lot at dusk",
    "a bowl of lemons beside a knife",
    "rows of identical blue chairs",
    "a bicycle leaning on a fence",
    "steam rising from a paper cup",
    "a dog asleep under a desk",
    "three arrows pointing north",
]


def make_image(i: int) -> Image.Image:
    rng = np.random.default_rng(np.random.SeedSequence([99, i]))
    base = rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8)
    base[: 8 + i, :, i % 3] = 255  # per-sample structure so stats differ
    return Image.fromarray(base, "RGB")


def build_dataset(root: str, n: int = 10) -> str:
    """n images + index.jsonl under root; returns the index path."""
    os.makedirs(root, exist_ok=True)
    index_path = os.path.join(root, "index.jsonl")
    with open(index_path, "w", encoding="utf-8") as fh:
        for i in range(n):
            name = f"img_{i:03d}.png"
            make_image(i).save(os.path.join(root, name))
            split = "train" if i < n - 2 else ("val" if i == n - 2 else "test")
            fh.write(json.dumps({
                "sample_id": f"fix-{i:03d}", "image": name,
                "text": TEXTS[i % len(TEXTS)], "label": i % 2,
                "split": split,
            }) + "\n")
    return index_path


@pytest.fixture(scope="session")
def dataset_index(tmp_path_factory):
    return build_dataset(str(tmp_path_factory.mktemp("dataset")))
