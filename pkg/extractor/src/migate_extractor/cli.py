"""Command line for the extraction adapter: extract and caption subcommands.

Both read an optional --config JSON whose "extract"/"caption" sections hold
the same keys as the flags; explicit flags win. Failures print one line to
stderr; exit 2 means the job description was unusable, exit 1 means every
requested caption failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .caption import CaptionFailure
from .embed import EncoderError
from .extract import CaptionJob, ExtractionJob, JobError, caption_batch, run_extraction
from .mifs import TableFormatError


def _section(args, name: str) -> dict:
    if not args.config:
        return {}
    if not os.path.exists(args.config):
        raise JobError(f"config not found: {args.config}")
    with open(args.config, encoding="utf-8") as fh:
        config = json.load(fh)
    section = config.get(name, {})
    if not isinstance(section, dict):
        raise JobError(f"config section {name!r} must be an object")
    return section


def _pick(flag, section: dict, key: str, default=None):
    if flag is not None:
        return flag
    return section.get(key, default)


def cmd_extract(args) -> int:
    section = _section(args, "extract")
    index = _pick(args.index, section, "index")
    out = _pick(args.out, section, "out")
    if not index or not out:
        raise JobError("extract needs --index and --out (or config keys)")
    job = ExtractionJob(
        index_path=index, out_dir=out,
        encoder=_pick(args.encoder, section, "encoder", "hashed-64"),
        batch_size=_pick(args.batch_size, section, "batch_size", 32),
        device=_pick(args.device, section, "device", "cpu"),
        n_classes=_pick(args.n_classes, section, "n_classes"))
    summary = run_extraction(job)
    print(f"extract: wrote {summary.n_written} records "
          f"(d_V={summary.d_v}, d_T={summary.d_t}) to {summary.table_path}; "
          f"{summary.n_skipped} skipped")
    return 0


def cmd_caption(args) -> int:
    section = _section(args, "caption")
    index = _pick(args.index, section, "index")
    out = _pick(args.out, section, "out")
    if not index or not out:
        raise JobError("caption needs --index and --out (or config keys)")
    job = CaptionJob(
        index_path=index, out_path=out,
        captioner=_pick(args.captioner, section, "captioner", "stat"),
        cache_path=_pick(args.cache, section, "cache"))
    n_ok, n_fail = caption_batch(job)
    print(f"caption: {n_ok} captioned, {n_fail} failed -> {job.out_path}")
    if n_ok == 0 and n_fail > 0:
        print("caption: every sample failed", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="migate-extract",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="embed a dataset into a feature table")
    p.add_argument("--config", help="job config JSON")
    p.add_argument("--index", help="dataset index JSONL")
    p.add_argument("--out", help="output directory")
    p.add_argument("--encoder", help="encoder identifier (default hashed-64)")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--device")
    p.add_argument("--n-classes", dest="n_classes", type=int)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("caption", help="caption indexed images to JSONL")
    p.add_argument("--config", help="job config JSON")
    p.add_argument("--index", help="dataset index JSONL")
    p.add_argument("--out", help="output caption JSONL path")
    p.add_argument("--captioner", help="captioner identifier (default stat)")
    p.add_argument("--cache", help="caption cache JSONL path")
    p.set_defaults(func=cmd_caption)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (JobError, EncoderError, TableFormatError, CaptionFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
