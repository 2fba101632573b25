"""Robustness scoring: performance drops, error taxonomy, consistency.

Responses come from yes/no probing questions asked about figures in two
categories (VD: the question needs the image; VS: the question can be asked
without one) under up to three variants (control image, manipulated image,
no image). A prediction is correct only when it equals the recorded ground
truth; "uncertain" is never correct.

Two delta conventions coexist in the reports and are kept explicit:
accuracy deltas are absolute percentage points, while error-category and
consistency deltas are relative percent changes.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

CATEGORIES = ("VD", "VS")
VARIANTS = ("control", "manipulated", "no_image")
ANSWERS = ("yes", "no")
PREDICTIONS = ("yes", "no", "uncertain")
ERROR_CLASSES = ("LI", "VI", "Mixed")

REQUIRED_VARIANTS = {"VS": ("no_image", "manipulated"),
                     "VD": ("control", "manipulated")}


class DomainError(ValueError):
    """Inputs outside the metric's domain (e.g. zero clean performance)."""


class SchemaError(ValueError):
    """Response log misses required structure."""


@dataclass(frozen=True)
class ResponseRecord:
    figure_id: str
    question_id: str
    category: str
    variant: str
    ground_truth: str
    prediction: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise SchemaError(f"{self.question_id}: category {self.category!r}")
        if self.variant not in VARIANTS:
            raise SchemaError(f"{self.question_id}: variant {self.variant!r}")
        if self.ground_truth not in ANSWERS:
            raise SchemaError(f"{self.question_id}: ground_truth {self.ground_truth!r}")
        if self.prediction not in PREDICTIONS:
            raise SchemaError(f"{self.question_id}: prediction {self.prediction!r}")

    @property
    def correct(self) -> bool:
        return self.prediction == self.ground_truth


@dataclass
class DiagnosisReport:
    li: int
    vi: int
    mixed: int
    accuracy: float
    consistency: float
    n_responses: int
    n_incorrect: int

    def as_dict(self) -> dict:
        return {"LI": self.li, "VI": self.vi, "Mixed": self.mixed,
                "accuracy": self.accuracy, "consistency": self.consistency,
                "n_responses": self.n_responses, "n_incorrect": self.n_incorrect}


def _group_pairs(records: Sequence[ResponseRecord]):
    seen = set()
    pairs: dict[tuple[str, str], dict[str, ResponseRecord]] = defaultdict(dict)
    for rec in records:
        key = (rec.figure_id, rec.question_id, rec.variant)
        if key in seen:
            raise SchemaError(f"duplicate response for {key}")
        seen.add(key)
        pair = pairs[(rec.figure_id, rec.question_id)]
        if pair and next(iter(pair.values())).category != rec.category:
            raise SchemaError(f"{rec.question_id}: inconsistent category")
        pair[rec.variant] = rec
    return pairs


def _classify_pair(category: str, by_variant: Mapping[str, ResponseRecord]) -> str | None:
    """One error class per incorrect (figure, question) pair, or None.

    VS: a wrong no-image answer is language-induced outright; repeating the
    (now wrong) no-image answer on the manipulated image is language-induced
    too; answering the no-image probe correctly but failing the manipulated
    image some other way is visual-induced. VD: any control failure, or a
    control pass followed by a manipulated failure, is visual-induced.
    Residual failures (e.g. only the optional variant is wrong) are Mixed.
    """
    wrong_any = any(not rec.correct for rec in by_variant.values())
    if not wrong_any:
        return None
    if category == "VS":
        no_image = by_variant["no_image"]
        manipulated = by_variant["manipulated"]
        if not no_image.correct:
            return "LI"
        if not manipulated.correct:
            if manipulated.prediction == no_image.prediction:
                return "LI"
            return "VI"
    else:
        control = by_variant["control"]
        manipulated = by_variant["manipulated"]
        if not control.correct:
            return "VI"
        if not manipulated.correct:
            return "VI"
    return "Mixed"


def classify_errors(records: Sequence[ResponseRecord]) -> DiagnosisReport:
    """Grade a response log and attribute each failed pair to one class."""
    if not records:
        raise SchemaError("empty response log")
    pairs = _group_pairs(records)
    for (fig, qid), by_variant in pairs.items():
        category = next(iter(by_variant.values())).category
        for needed in REQUIRED_VARIANTS[category]:
            if needed not in by_variant:
                raise SchemaError(
                    f"question {qid} (figure {fig}, {category}) missing "
                    f"required variant {needed!r}")
    counts = {cls: 0 for cls in ERROR_CLASSES}
    for (_, _), by_variant in pairs.items():
        category = next(iter(by_variant.values())).category
        verdict = _classify_pair(category, by_variant)
        if verdict is not None:
            counts[verdict] += 1
    n_responses = len(records)
    n_incorrect = sum(not rec.correct for rec in records)
    by_figure: dict[str, bool] = defaultdict(lambda: True)
    for rec in records:
        by_figure[rec.figure_id] &= rec.correct
    return DiagnosisReport(
        li=counts["LI"], vi=counts["VI"], mixed=counts["Mixed"],
        accuracy=(n_responses - n_incorrect) / n_responses,
        consistency=sum(by_figure.values()) / len(by_figure),
        n_responses=n_responses, n_incorrect=n_incorrect)


def consistency(records: Sequence[ResponseRecord]) -> float:
    """Fraction of figures whose every graded response is correct."""
    if not records:
        raise SchemaError("empty response log")
    by_figure: dict[str, bool] = defaultdict(lambda: True)
    for rec in records:
        by_figure[rec.figure_id] &= rec.correct
    return sum(by_figure.values()) / len(by_figure)


# ---------------------------------------------------------------------------
# Performance deltas

def delta_p(p_corrupted: float, p_clean: float) -> float:
    """Relative performance change (P_corr - P_clean) / P_clean."""
    if p_clean <= 0:
        raise DomainError(f"clean performance {p_clean} must be positive")
    return (p_corrupted - p_clean) / p_clean


def macro_average(values: Iterable[float]) -> float:
    """Unweighted mean across groups (e.g. per-category deltas)."""
    values = list(values)
    if not values:
        raise DomainError("macro average of nothing")
    return float(np.mean(values))


def absolute_pp_change(before: float, after: float) -> float:
    """Percentage-point delta for quantities already expressed in percent."""
    return after - before


def relative_pct_change(before: float, after: float) -> float | None:
    """Relative percent delta; undefined (None) when the baseline is zero."""
    if before == 0:
        return None
    return 100.0 * (after - before) / abs(before)


@dataclass
class StabilityReport:
    """Per-(kind, level) relative performance deltas plus per-level summary.

    level_mean/level_std aggregate across kinds at fixed level (sample SD,
    ddof=1; a single kind reports std 0).
    """

    p_clean: float
    cells: dict[tuple[str, int], float]

    def levels(self) -> list[int]:
        return sorted({level for _, level in self.cells})

    def level_summary(self) -> dict[int, tuple[float, float]]:
        out = {}
        for level in self.levels():
            vals = [dp for (_, lv), dp in self.cells.items() if lv == level]
            std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            out[level] = (float(np.mean(vals)), std)
        return out

    def as_dict(self) -> dict:
        return {
            "p_clean": self.p_clean,
            "cells": [{"kind": k, "level": lv, "delta_p": dp}
                      for (k, lv), dp in sorted(self.cells.items())],
            "levels": {str(lv): {"mean": m, "std": s}
                       for lv, (m, s) in self.level_summary().items()},
        }


def stability_report(p_clean: float,
                     p_corrupted: Mapping[tuple[str, int], float]) -> StabilityReport:
    cells = {key: delta_p(val, p_clean) for key, val in p_corrupted.items()}
    return StabilityReport(p_clean=p_clean, cells=cells)


# ---------------------------------------------------------------------------
# Report files

def write_diagnosis_json(report: DiagnosisReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_stability_json(report: StabilityReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


DELTA_CSV_FIELDS = ("model", "rate", "delta_acc_pp", "delta_li_pct",
                    "delta_vi_pct", "delta_mixed_pct", "delta_consistency_pct")


def diagnosis_delta_row(model: str, rate: float, clean: DiagnosisReport,
                        corrupted: DiagnosisReport) -> dict:
    """One summary row: ΔAcc in points, category/consistency deltas relative."""
    def rel(before, after):
        change = relative_pct_change(before, after)
        return "undefined" if change is None else f"{change:.9g}"

    return {
        "model": model,
        "rate": f"{rate:.9g}",
        "delta_acc_pp": f"{absolute_pp_change(clean.accuracy * 100, corrupted.accuracy * 100):.9g}",
        "delta_li_pct": rel(clean.li, corrupted.li),
        "delta_vi_pct": rel(clean.vi, corrupted.vi),
        "delta_mixed_pct": rel(clean.mixed, corrupted.mixed),
        "delta_consistency_pct": rel(clean.consistency, corrupted.consistency),
    }


def write_delta_csv(rows: Sequence[dict], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=DELTA_CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_response_log(path: str) -> list[ResponseRecord]:
    """JSONL rows with the six response fields; bad rows raise SchemaError."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {line_no}: not valid JSON ({exc})") from exc
            try:
                records.append(ResponseRecord(
                    row["figure_id"], row["question_id"], row["category"],
                    row["variant"], row["ground_truth"], row["prediction"]))
            except KeyError as exc:
                raise SchemaError(f"line {line_no}: missing field {exc}") from exc
    return records
