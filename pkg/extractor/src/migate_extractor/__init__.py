"""Adapter from raw image/text datasets to migate's interchange files.

Extraction embeds both modalities and writes the binary feature table plus
a text manifest; captioning writes caption JSONL rows the gate's file
provider reads directly. Nothing here imports the consumer package: the
file formats are the contract.
"""

from .caption import CaptionCache, CaptionFailure, RemoteCaptioner, StatCaptioner
from .embed import HashedDualEncoder, get_encoder
from .extract import CaptionJob, ExtractionJob, caption_batch, run_extraction
from .mifs import read_table, write_table

__version__ = "0.1.0"

__all__ = [
    "CaptionCache",
    "CaptionFailure",
    "CaptionJob",
    "ExtractionJob",
    "HashedDualEncoder",
    "RemoteCaptioner",
    "StatCaptioner",
    "caption_batch",
    "get_encoder",
    "read_table",
    "run_extraction",
    "write_table",
]
