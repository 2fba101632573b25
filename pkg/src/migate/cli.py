"""Command-line front end.

Subcommands mirror the pipeline stages: synth (gate datasets with exact
ground truth), estimate (fit models, decompose), gate (caption selection),
corrupt (image/text noise trees), score (robustness reports), report
(aggregate comparison). One config seed flows through named sub-seeds so a
whole run is reproducible; reruns are byte-identical.

Failures print a single JSON object to stderr and exit with a stable code:
2 config, 3 numerical, 4 caption provider, 5 unreadable asset, 6 schema.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import corruption as corr
from . import feature_store as fs
from . import gate as gatemod
from . import metrics as met
from . import pid
from . import synthetic as synth
from .nn import NumericalError, TrainConfig, subseed

log = logging.getLogger("migate")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PROVIDER = 4
EXIT_ASSET = 5
EXIT_SCHEMA = 6


class ConfigError(Exception):
    pass


class AssetError(Exception):
    pass


_TOP_KEYS = {"data", "estimator", "gate", "corruption", "metrics", "output_dir", "seed"}
_SECTION_KEYS = {
    "data": {"table", "texts"},
    "estimator": {"k", "standardize", "pca_dim", "entropy_max_epochs",
                  "classifier_max_epochs", "learning_rate", "batch_size",
                  "early_stop_min_delta", "early_stop_patience",
                  "lr_decay_factor", "lr_decay_period"},
    "gate": {"tau", "mode", "hash_salt", "captions", "decomposition"},
    "corruption": {"kinds", "levels", "text_ops", "text_levels"},
    "metrics": {"responses", "clean_responses", "performance", "model", "rate"},
}


@dataclass
class RunConfig:
    data: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)
    gate: dict = field(default_factory=dict)
    corruption: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    output_dir: str | None = None
    seed: int = 42

    @classmethod
    def from_mapping(cls, raw: dict) -> "RunConfig":
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for section, allowed in _SECTION_KEYS.items():
            sub = raw.get(section, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"config section {section!r} must be an object")
            bad = set(sub) - allowed
            if bad:
                raise ConfigError(f"unknown keys in config.{section}: {sorted(bad)}")
        seed = raw.get("seed", 42)
        if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
            raise ConfigError(f"seed must be a u64, got {seed!r}")
        return cls(data=raw.get("data", {}), estimator=raw.get("estimator", {}),
                   gate=raw.get("gate", {}), corruption=raw.get("corruption", {}),
                   metrics=raw.get("metrics", {}), output_dir=raw.get("output_dir"),
                   seed=seed)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_mapping(raw)


def _setup_logging() -> None:
    raw = os.environ.get("MIGATE_LOG", "error")
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if raw not in levels:
        raise ConfigError(f"MIGATE_LOG must be one of {sorted(levels)}, got {raw!r}")
    logging.basicConfig(level=levels[raw],
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _require_out(cfg: RunConfig) -> str:
    if not cfg.output_dir:
        raise ConfigError("an output directory is required (--out or output_dir)")
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def _train_config(cfg: RunConfig) -> TrainConfig:
    est = cfg.estimator
    return TrainConfig(
        learning_rate=est.get("learning_rate", 1e-3),
        batch_size=est.get("batch_size", 64),
        max_epochs=est.get("classifier_max_epochs", 30),
        early_stop_min_delta=est.get("early_stop_min_delta", 1e-4),
        early_stop_patience=est.get("early_stop_patience", 5),
        seed=subseed(cfg.seed, "estimator"),
        lr_decay_factor=est.get("lr_decay_factor", 0.5),
        lr_decay_period=est.get("lr_decay_period", 10),
    )


# ---------------------------------------------------------------------------
# Subcommands

def cmd_synth(args) -> int:
    cfg = _load_config(args)
    if args.n < 100:
        raise ConfigError(f"synth needs n >= 100, got {args.n}")
    out = _require_out(cfg)
    seed = subseed(cfg.seed, "synth")
    table, texts = synth.make_gate_table(args.gate, args.n, sigma=args.jitter,
                                         seed=seed)
    fs.write_table(table, os.path.join(out, "table.mifs"))
    fs.write_text_manifest(texts, os.path.join(out, "texts.jsonl"))
    oracle = pid.exact_oracle(synth.gate_distribution(args.gate))
    _write_oracle_csv(oracle, os.path.join(out, "oracle_decomposition.csv"))
    pid.write_aggregates_json(oracle.aggregates,
                              os.path.join(out, "oracle_aggregates.json"))
    print(f"synth: wrote {table.n} {args.gate} samples to {out}")
    return 0


def _write_oracle_csv(oracle: pid.OracleResult, path: str) -> None:
    import csv as _csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(("outcome", "probability") + pid.CSV_FIELDS[1:])
        for o in oracle.outcomes:
            outcome = f"v={o.x_v}|t={o.x_t}|y={o.y}"
            writer.writerow([outcome, f"{o.probability:.9g}"] +
                            [f"{v:.9g}" for v in (o.r_plus, o.r_minus, o.r,
                                                  o.u_v, o.u_t, o.s)])


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    table_path = args.table or cfg.data.get("table")
    if not table_path:
        raise ConfigError("estimate needs a feature table (--table or data.table)")
    if not os.path.exists(table_path):
        raise ConfigError(f"feature table not found: {table_path}")
    out = _require_out(cfg)
    table = fs.read_table(table_path)
    est = cfg.estimator
    result = pid.estimate_interactions(
        table, _train_config(cfg), k=est.get("k", 6),
        standardize=est.get("standardize", False),
        pca_dim=est.get("pca_dim"),
        entropy_max_epochs=est.get("entropy_max_epochs", 80),
        classifier_max_epochs=est.get("classifier_max_epochs", 30))
    decomp = result.decomposition
    splits = set(decomp.splits)
    for split in fs.SPLITS:
        if split not in splits:
            continue
        mask = [sp == split for sp in decomp.splits]
        sub = _subset_decomposition(decomp, mask)
        pid.write_decomposition_csv(sub, os.path.join(out, f"decomposition_{split}.csv"))
    aggregates = result.aggregates_by_split()
    with open(os.path.join(out, "aggregates.json"), "w", encoding="utf-8") as fh:
        json.dump(aggregates, fh, indent=2, sort_keys=True)
        fh.write("\n")
    pid.write_aggregates_json(pid.aggregate(decomp),
                              os.path.join(out, "aggregates_all.json"))
    print(f"estimate: decomposed {decomp.n} samples; "
          f"R={aggregates['all']['R']:.4f} U_V={aggregates['all']['U_V']:.4f} "
          f"U_T={aggregates['all']['U_T']:.4f} S={aggregates['all']['S']:.4f}")
    return 0


def _subset_decomposition(decomp: pid.PointwiseDecomposition, mask) -> pid.PointwiseDecomposition:
    mask = np.asarray(mask, dtype=bool)
    ids = [sid for sid, keep in zip(decomp.sample_ids, mask) if keep]
    splits = [sp for sp, keep in zip(decomp.splits, mask) if keep]
    return pid.PointwiseDecomposition(
        ids, splits, decomp.i_plus[mask], decomp.i_minus[mask],
        decomp.r_plus[mask], decomp.r_minus[mask], decomp.r[mask],
        decomp.u_v[mask], decomp.u_t[mask], decomp.s[mask])


def cmd_gate(args) -> int:
    cfg = _load_config(args)
    table_path = args.table or cfg.data.get("table")
    texts_path = args.texts or cfg.data.get("texts")
    decomp_path = args.decomposition or cfg.gate.get("decomposition")
    captions_path = args.captions or cfg.gate.get("captions")
    tau = args.tau if args.tau is not None else cfg.gate.get("tau")
    mode = args.mode or cfg.gate.get("mode", "interaction_gated")
    if tau is None:
        raise ConfigError("gate needs tau (--tau or gate.tau)")
    for name, path in (("table", table_path), ("texts", texts_path),
                       ("captions", captions_path)):
        if not path:
            raise ConfigError(f"gate needs a {name} path")
        if not os.path.exists(path):
            raise ConfigError(f"{name} file not found: {path}")
    if mode == "interaction_gated":
        if not decomp_path:
            raise ConfigError("interaction_gated mode needs a decomposition CSV")
        if not os.path.exists(decomp_path):
            raise ConfigError(f"decomposition file not found: {decomp_path}")
        decomp = pid.read_decomposition_csv(decomp_path)
    else:
        decomp = None
    out = _require_out(cfg)
    table = fs.read_table(table_path)
    texts = fs.read_text_manifest(texts_path)
    try:
        gate_cfg = gatemod.GateConfig(tau=tau, mode=mode,
                                      hash_salt=cfg.gate.get("hash_salt", ""))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    provider = gatemod.MemoizingProvider(gatemod.FileCaptionProvider(captions_path))
    manifest = gatemod.run_gate(table, texts, decomp, gate_cfg, provider)
    manifest.to_jsonl(os.path.join(out, "augmentation_manifest.jsonl"))
    n_valid = len(gatemod.select_valid(decomp)) if decomp is not None else table.n
    n_sel = len(manifest.selected_ids())
    print(f"gate: selected k={n_sel} of valid={n_valid} (N={table.n}, "
          f"tau={gate_cfg.tau}, mode={gate_cfg.mode})")
    return 0


def cmd_corrupt(args) -> int:
    cfg = _load_config(args)
    out = _require_out(cfg)
    seed = subseed(cfg.seed, "corruption")
    kinds = cfg.corruption.get("kinds", list(corr.IMAGE_KINDS))
    levels = cfg.corruption.get("levels", [1, 2, 3, 4, 5])
    text_ops = cfg.corruption.get("text_ops", list(corr.TEXT_KINDS))
    text_levels = cfg.corruption.get("text_levels", [1, 2, 3, 4, 5])
    for kind in kinds:
        if kind not in corr.IMAGE_KINDS:
            raise ConfigError(f"unknown image corruption kind {kind!r}")
    for op in text_ops:
        if op not in corr.TEXT_KINDS:
            raise ConfigError(f"unknown text corruption op {op!r}")
    entries: list[corr.LedgerEntry] = []
    did_anything = False
    if args.images:
        did_anything = True
        entries.extend(_corrupt_images(args.images, out, kinds, levels, seed,
                                       args.jobs or 1))
    if args.texts:
        did_anything = True
        entries.extend(_corrupt_texts(args.texts, out, text_ops, text_levels, seed))
    if not did_anything:
        raise ConfigError("corrupt needs --images and/or --texts")
    entries.sort(key=lambda e: (e.kind, e.level, e.sample_id))
    corr.write_ledger(entries, os.path.join(out, "ledger.jsonl"))
    excluded = sum(e.excluded for e in entries)
    print(f"corrupt: {len(entries)} outputs, {excluded} excluded; ledger written")
    return 0


def _corrupt_images(images_dir, out, kinds, levels, seed, jobs) -> list[corr.LedgerEntry]:
    paths = sorted(glob.glob(os.path.join(images_dir, "*.png")))
    if not paths:
        raise AssetError(f"no PNG images found under {images_dir}")
    loaded = []
    for path in paths:
        sid = os.path.splitext(os.path.basename(path))[0]
        try:
            loaded.append((sid, corr.ImageBuffer.from_png(path)))
        except Exception as exc:
            raise AssetError(f"unreadable image {path}: {exc}") from exc
    tasks = [(sid, img, kind, level)
             for kind in kinds for level in levels for sid, img in loaded]
    for kind in kinds:
        for level in levels:
            os.makedirs(os.path.join(out, kind, f"level_{level}"), exist_ok=True)

    def run(task):
        sid, img, kind, level = task
        noisy = corr.corrupt_image(img, kind, level,
                                   corr.sample_seed(sid, kind, level, salt=str(seed)))
        noisy.to_png(os.path.join(out, kind, f"level_{level}", f"{sid}.png"))
        return corr.LedgerEntry(sid, kind, level, 1, False)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, tasks))
    return [run(t) for t in tasks]


def _corrupt_texts(texts_path, out, ops, levels, seed) -> list[corr.LedgerEntry]:
    if not os.path.exists(texts_path):
        raise AssetError(f"text manifest not found: {texts_path}")
    rows = []
    with open(texts_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                row = json.loads(line)
                rows.append((row["sample_id"], row["text"]))
    entries = []
    oracle = corr.TrigramOracle()
    for op in ops:
        for level in levels:
            directory = os.path.join(out, "text", op)
            os.makedirs(directory, exist_ok=True)
            out_path = os.path.join(directory, f"level_{level}.jsonl")
            with open(out_path, "w", encoding="utf-8") as fh:
                for sid, text in rows:
                    outcome = corr.corrupt_text(
                        text, op, level,
                        corr.sample_seed(sid, op, level, salt=str(seed)), oracle)
                    if outcome.excluded:
                        fh.write(json.dumps({"sample_id": sid, "text": None,
                                             "excluded": True}) + "\n")
                    else:
                        fh.write(json.dumps({"sample_id": sid,
                                             "text": outcome.result},
                                            ensure_ascii=False) + "\n")
                    entries.append(corr.LedgerEntry(sid, op, level,
                                                    outcome.attempts,
                                                    outcome.excluded))
    return entries


def cmd_score(args) -> int:
    cfg = _load_config(args)
    out = _require_out(cfg)
    responses_path = args.responses or cfg.metrics.get("responses")
    if not responses_path:
        raise ConfigError("score needs a response log (--responses)")
    if not os.path.exists(responses_path):
        raise ConfigError(f"response log not found: {responses_path}")
    records = met.read_response_log(responses_path)
    report = met.classify_errors(records)
    met.write_diagnosis_json(report, os.path.join(out, "diagnosis.json"))
    clean_path = args.clean_responses or cfg.metrics.get("clean_responses")
    if clean_path:
        clean = met.classify_errors(met.read_response_log(clean_path))
        row = met.diagnosis_delta_row(
            args.model or cfg.metrics.get("model", "model"),
            args.rate if args.rate is not None else cfg.metrics.get("rate", 0.0),
            clean, report)
        met.write_delta_csv([row], os.path.join(out, "delta_summary.csv"))
    perf_path = args.performance or cfg.metrics.get("performance")
    if perf_path:
        with open(perf_path, encoding="utf-8") as fh:
            perf = json.load(fh)
        cells = {(c["kind"], int(c["level"])): float(c["p"])
                 for c in perf.get("cells", [])}
        try:
            stability = met.stability_report(float(perf["p_clean"]), cells)
        except met.DomainError as exc:
            raise met.SchemaError(str(exc)) from exc
        met.write_stability_json(stability, os.path.join(out, "stability.json"))
    print(f"score: {report.n_responses} responses, accuracy "
          f"{report.accuracy:.4f}, LI={report.li} VI={report.vi} "
          f"Mixed={report.mixed}")
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args)
    out = _require_out(cfg)
    for name, path in (("baseline", args.baseline), ("variant", args.variant)):
        if not path:
            raise ConfigError(f"report needs --{name}")
        if not os.path.exists(path):
            raise ConfigError(f"{name} aggregates not found: {path}")
    baseline = pid.read_aggregates_json(args.baseline)
    variant = pid.read_aggregates_json(args.variant)
    change = pid.relative_change(baseline, variant)
    payload = {
        "baseline": baseline.as_dict(),
        "variant": variant.as_dict(),
        "relative_change_pct": {k: ("undefined" if v is None else v)
                                for k, v in change.items()},
    }
    path = os.path.join(out, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"report: wrote {path}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a run-config JSON file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=1,
                        help="worker threads for parallelizable stages")
    parser = argparse.ArgumentParser(prog="migate",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a logic-gate dataset with exact ground truth")
    p.add_argument("--gate", required=True, choices=synth.GATES)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--jitter", type=float, default=synth.DEFAULT_JITTER)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", parents=[common],
                       help="fit estimators and decompose a feature table")
    p.add_argument("--table", help="feature table path (overrides config)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("gate", parents=[common],
                       help="select and caption interaction-dominant samples")
    p.add_argument("--table")
    p.add_argument("--texts")
    p.add_argument("--decomposition")
    p.add_argument("--captions")
    p.add_argument("--tau", type=float)
    p.add_argument("--mode", choices=gatemod.MODES)
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("corrupt", parents=[common],
                       help="write corrupted copies of images and texts")
    p.add_argument("--images", help="directory of PNG images")
    p.add_argument("--texts", help="JSONL manifest of texts")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("score", parents=[common],
                       help="grade response logs into robustness reports")
    p.add_argument("--responses")
    p.add_argument("--clean-responses", dest="clean_responses")
    p.add_argument("--performance")
    p.add_argument("--model")
    p.add_argument("--rate", type=float)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", parents=[common],
                       help="compare two aggregate files")
    p.add_argument("--baseline")
    p.add_argument("--variant")
    p.set_defaults(func=cmd_report)
    return parser


_ERROR_CODES = (
    (ConfigError, EXIT_CONFIG),
    (NumericalError, EXIT_NUMERICAL),
    (gatemod.GateError, EXIT_PROVIDER),
    (AssetError, EXIT_ASSET),
    (met.SchemaError, EXIT_SCHEMA),
    (fs.StoreError, EXIT_CONFIG),
    (ValueError, EXIT_CONFIG),
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_logging()
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single JSON error contract
        for klass, code in _ERROR_CODES:
            if isinstance(exc, klass):
                break
        else:
            raise
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "exit_code": code}), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
