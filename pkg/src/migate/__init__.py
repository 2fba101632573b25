"""Pointwise multimodal interaction estimation, gated captioning, and
corruption-robustness scoring."""

from .feature_store import (
    FeatureRecord,
    FeatureTable,
    TextManifestRecord,
    read_table,
    read_text_manifest,
    validate_table,
    write_table,
    write_text_manifest,
)
from .nn import NumericalError, RankError, TrainConfig
from .pid import (
    AggregateInteractions,
    PointwiseDecomposition,
    aggregate,
    decompose,
    estimate_interactions,
    exact_oracle,
    relative_change,
)
from .gate import GateConfig, GateError, run_gate
from .corruption import EXCLUDED, corrupt_image, corrupt_text
from .metrics import DiagnosisReport, classify_errors, stability_report

__version__ = "0.1.0"

__all__ = [
    "AggregateInteractions", "DiagnosisReport", "EXCLUDED", "FeatureRecord",
    "FeatureTable", "GateConfig", "GateError", "NumericalError",
    "PointwiseDecomposition", "RankError", "TextManifestRecord", "TrainConfig",
    "aggregate", "classify_errors", "corrupt_image", "corrupt_text",
    "decompose", "estimate_interactions", "exact_oracle", "read_table",
    "read_text_manifest", "relative_change", "run_gate", "stability_report",
    "validate_table", "write_table", "write_text_manifest", "__version__",
]
