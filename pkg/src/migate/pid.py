"""Pointwise decomposition of two-modality label information.

Per sample, each modality m gets a specificity i+(x_m; y) = h(x_m) and an
ambiguity i-(x_m; y) = h(x_m) + log P(y) - log P(y | x_m), both in nats.
Redundancy takes the pointwise min of each column over the two single
modalities, uniqueness is each modality's information minus redundancy, and
synergy is whatever of the joint information remains:

    r  = min_m i+  -  min_m i-          (m ranges over {V, T} only)
    u_m = i(x_m; y) - r
    s  = i(x_VT; y) - r - u_V - u_T

The chain identities (r + u_m = i(x_m;y), r + u_V + u_T + s = i(joint;y))
hold exactly by construction and negative values are reported as-is; nothing
is clamped. An exact enumeration oracle over small discrete distributions
provides ground truth for estimator tests.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import discriminators as disc
from . import entropy as ent
from . import feature_store as fs
from .nn import PcaModel, TrainConfig, TrainHistory, pca_fit, pca_transform, subseed, train

MODALITIES = ("V", "T", "J")
COMPONENTS = ("R", "U_V", "U_T", "S")


@dataclass
class PointwiseDecomposition:
    sample_ids: list[str]
    splits: list[str]
    i_plus: np.ndarray   # (N, 3) columns V, T, J
    i_minus: np.ndarray  # (N, 3)
    r_plus: np.ndarray
    r_minus: np.ndarray
    r: np.ndarray
    u_v: np.ndarray
    u_t: np.ndarray
    s: np.ndarray

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    def mutual_information(self, m: str) -> np.ndarray:
        j = MODALITIES.index(m)
        return self.i_plus[:, j] - self.i_minus[:, j]


@dataclass
class AggregateInteractions:
    r: float
    u_v: float
    u_t: float
    s: float

    def as_dict(self) -> dict[str, float]:
        return {"R": self.r, "U_V": self.u_v, "U_T": self.u_t, "S": self.s}

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.u_v, self.u_t, self.s])


def pointwise_terms(entropy_models: Mapping[str, ent.GmmEntropyModel],
                    dset: disc.DiscriminatorSet,
                    prior: disc.ClassPrior,
                    x_v: np.ndarray, x_t: np.ndarray, y: np.ndarray):
    """Per-sample specificity/ambiguity for V, T, and the concatenated pair.

    Returns (i_plus, i_minus), each (N, 3) in modality order V, T, J.
    """
    x_v = np.atleast_2d(np.asarray(x_v, dtype=np.float64))
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    x_j = np.concatenate([x_v, x_t], axis=1)
    n = x_v.shape[0]
    log_prior = prior.log_probabilities()[y]
    i_plus = np.empty((n, 3))
    i_minus = np.empty((n, 3))
    for col, (m, x) in enumerate((("V", x_v), ("T", x_t), ("J", x_j))):
        h = ent.pointwise_entropy(entropy_models[m], x)
        log_post = disc.log_posterior(dset, m, x)[np.arange(n), y]
        i_plus[:, col] = h
        i_minus[:, col] = h + log_prior - log_post
    return i_plus, i_minus


def decompose(sample_ids: Sequence[str], splits: Sequence[str],
              i_plus: np.ndarray, i_minus: np.ndarray) -> PointwiseDecomposition:
    """Definitions applied pointwise; the min ranges over {V, T} only."""
    i_plus = np.asarray(i_plus, dtype=np.float64)
    i_minus = np.asarray(i_minus, dtype=np.float64)
    r_plus = np.minimum(i_plus[:, 0], i_plus[:, 1])
    r_minus = np.minimum(i_minus[:, 0], i_minus[:, 1])
    r = r_plus - r_minus
    mi = i_plus - i_minus
    u_v = mi[:, 0] - r
    u_t = mi[:, 1] - r
    s = mi[:, 2] - r - u_v - u_t
    return PointwiseDecomposition(list(sample_ids), list(splits), i_plus, i_minus,
                                  r_plus, r_minus, r, u_v, u_t, s)


def aggregate(decomp: PointwiseDecomposition, split: str | None = None,
              weights: np.ndarray | None = None) -> AggregateInteractions:
    """Mean of each pointwise vector; optionally restricted to one split."""
    mask = np.ones(decomp.n, dtype=bool)
    if split is not None:
        mask = np.asarray([sp == split for sp in decomp.splits])
        if not mask.any():
            raise ValueError(f"no samples in split {split!r}")
    if weights is None:
        w = np.ones(int(mask.sum()))
    else:
        w = np.asarray(weights, dtype=np.float64)[mask]
    w = w / w.sum()
    return AggregateInteractions(
        r=float(w @ decomp.r[mask]),
        u_v=float(w @ decomp.u_v[mask]),
        u_t=float(w @ decomp.u_t[mask]),
        s=float(w @ decomp.s[mask]),
    )


def relative_change(before: AggregateInteractions,
                    after: AggregateInteractions) -> dict[str, float | None]:
    """Percent change per component: 100 * (after - before) / |before|.

    A zero baseline makes the ratio undefined and maps to None.
    """
    out: dict[str, float | None] = {}
    b, a = before.as_dict(), after.as_dict()
    for key in COMPONENTS:
        if b[key] == 0.0:
            out[key] = None
        else:
            out[key] = 100.0 * (a[key] - b[key]) / abs(b[key])
    return out


# ---------------------------------------------------------------------------
# Exact oracle over small discrete distributions

@dataclass
class DiscreteJointDistribution:
    alphabet_v: list
    alphabet_t: list
    alphabet_y: list
    p: np.ndarray  # (|V|, |T|, |Y|)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        expected = (len(self.alphabet_v), len(self.alphabet_t), len(self.alphabet_y))
        if self.p.shape != expected:
            raise ValueError(f"tensor shape {self.p.shape} != alphabets {expected}")
        if np.any(self.p < 0):
            raise ValueError("negative probability")
        if abs(self.p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {self.p.sum()}")


@dataclass
class OracleOutcome:
    x_v: object
    x_t: object
    y: object
    probability: float
    i_plus: np.ndarray
    i_minus: np.ndarray
    r_plus: float
    r_minus: float
    r: float
    u_v: float
    u_t: float
    s: float


@dataclass
class OracleResult:
    outcomes: list[OracleOutcome]
    aggregates: AggregateInteractions


def exact_oracle(dist: DiscreteJointDistribution) -> OracleResult:
    """Enumerate every positive-probability outcome and decompose exactly.

    Marginals come from direct summation, so this is an independent check on
    any sample-based estimate; aggregates weight outcomes by probability.
    """
    p = dist.p
    p_v = p.sum(axis=(1, 2))
    p_t = p.sum(axis=(0, 2))
    p_y = p.sum(axis=(0, 1))
    p_vt = p.sum(axis=2)
    p_vy = p.sum(axis=1)
    p_ty = p.sum(axis=0)
    outcomes = []
    agg = np.zeros(4)
    for iv in range(p.shape[0]):
        for it in range(p.shape[1]):
            for iy in range(p.shape[2]):
                prob = p[iv, it, iy]
                if prob == 0.0:
                    continue
                h = np.array([-np.log(p_v[iv]), -np.log(p_t[it]), -np.log(p_vt[iv, it])])
                h_cond = np.array([
                    -np.log(p_vy[iv, iy] / p_y[iy]),
                    -np.log(p_ty[it, iy] / p_y[iy]),
                    -np.log(prob / p_y[iy]),
                ])
                r_plus = min(h[0], h[1])
                r_minus = min(h_cond[0], h_cond[1])
                r = r_plus - r_minus
                mi = h - h_cond
                u_v = mi[0] - r
                u_t = mi[1] - r
                s = mi[2] - r - u_v - u_t
                outcomes.append(OracleOutcome(
                    dist.alphabet_v[iv], dist.alphabet_t[it], dist.alphabet_y[iy],
                    prob, h, h_cond, r_plus, r_minus, r, u_v, u_t, s))
                agg += prob * np.array([r, u_v, u_t, s])
    return OracleResult(outcomes, AggregateInteractions(*agg))


# ---------------------------------------------------------------------------
# Full estimation recipe

class EntropyModelSet:
    """Three mixtures trained simultaneously on summed NLL over shared batches."""

    def __init__(self, gmm_v: ent.GmmEntropyModel, gmm_t: ent.GmmEntropyModel,
                 gmm_j: ent.GmmEntropyModel):
        self.gmm_v = gmm_v
        self.gmm_t = gmm_t
        self.gmm_j = gmm_j

    def model(self, which: str) -> ent.GmmEntropyModel:
        return {"V": self.gmm_v, "T": self.gmm_t, "J": self.gmm_j}[which]

    def as_mapping(self) -> dict[str, ent.GmmEntropyModel]:
        return {"V": self.gmm_v, "T": self.gmm_t, "J": self.gmm_j}

    def parameters(self) -> list[np.ndarray]:
        return (self.gmm_v.parameters() + self.gmm_t.parameters()
                + self.gmm_j.parameters())

    def loss_and_grads(self, batch, grads: bool = True):
        x_v, x_t = batch
        x_j = np.concatenate([x_v, x_t], axis=1)
        total = 0.0
        all_grads: list[np.ndarray] = []
        for model, x in ((self.gmm_v, x_v), (self.gmm_t, x_t), (self.gmm_j, x_j)):
            loss, g = ent.nll_loss(model, (x,), grads=grads)
            total += loss
            if grads:
                all_grads.extend(g)
        return total, (all_grads if grads else None)


def train_entropy_models(table: fs.FeatureTable, cfg: TrainConfig | None = None,
                         k: int = 6) -> tuple[EntropyModelSet, TrainHistory]:
    """Fit V/T/J mixtures on the train split, early-stopped on val."""
    if cfg is None:
        cfg = TrainConfig(max_epochs=80)
    _, splits, x_v, x_t, _ = table.arrays()
    splits = np.asarray(splits)
    tr = splits == "train"
    va = splits == "val"
    if not tr.any() or not va.any():
        raise ValueError("need non-empty train and val splits")
    x_v = x_v.astype(np.float64)
    x_t = x_t.astype(np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x6A6F]))
    x_j = np.concatenate([x_v, x_t], axis=1)
    model = EntropyModelSet(
        ent.init_gmm(x_v[tr], k, rng),
        ent.init_gmm(x_t[tr], k, rng),
        ent.init_gmm(x_j[tr], k, rng),
    )
    history = train(model, (x_v[tr], x_t[tr]), EntropyModelSet.loss_and_grads,
                    cfg, (x_v[va], x_t[va]))
    return model, history


@dataclass
class EstimationResult:
    entropy_models: EntropyModelSet
    discriminators: disc.DiscriminatorSet
    prior: disc.ClassPrior
    decomposition: PointwiseDecomposition
    entropy_history: TrainHistory = field(default_factory=TrainHistory)
    classifier_history: TrainHistory = field(default_factory=TrainHistory)
    pca: dict[str, PcaModel] | None = None

    def aggregates_by_split(self) -> dict[str, dict[str, float]]:
        out = {}
        for split in fs.SPLITS:
            if split in self.decomposition.splits:
                out[split] = aggregate(self.decomposition, split).as_dict()
        out["all"] = aggregate(self.decomposition).as_dict()
        return out


def estimate_interactions(table: fs.FeatureTable, cfg: TrainConfig | None = None,
                          k: int = 6, standardize: bool = False,
                          pca_dim: int | None = None,
                          entropy_max_epochs: int = 80,
                          classifier_max_epochs: int = 30) -> EstimationResult:
    """End-to-end estimate: entropies + posteriors + prior -> decomposition.

    Models are fit on the train split (val split steers early stopping) and
    the decomposition is evaluated for every record in table order. The label
    prior is the empirical frequency over the whole table.
    """
    if cfg is None:
        cfg = TrainConfig()
    violations = fs.validate_table(table)
    if violations:
        raise ValueError("invalid table: " + "; ".join(violations))
    ids, splits, x_v, x_t, y = table.arrays()
    x_v = x_v.astype(np.float64)
    x_t = x_t.astype(np.float64)
    splits_arr = np.asarray(splits)
    tr = splits_arr == "train"
    pca_models = None
    if standardize:
        for x in (x_v, x_t):
            mu = x[tr].mean(axis=0)
            sd = np.maximum(x[tr].std(axis=0), 1e-8)
            x -= mu
            x /= sd
    if pca_dim is not None:
        pca_models = {"V": pca_fit(x_v[tr], pca_dim), "T": pca_fit(x_t[tr], pca_dim)}
        x_v = pca_transform(pca_models["V"], x_v)
        x_t = pca_transform(pca_models["T"], x_t)
    work = fs.table_from_arrays(ids, splits, x_v, x_t, y, table.n_classes)

    ent_cfg = replace(cfg, max_epochs=entropy_max_epochs,
                      seed=subseed(cfg.seed, "entropy"))
    disc_cfg = replace(cfg, max_epochs=classifier_max_epochs,
                       seed=subseed(cfg.seed, "discriminators"))
    models, ent_hist = train_entropy_models(work, ent_cfg, k=k)
    trained = disc.train_set(work, disc_cfg)
    prior = disc.class_prior(y, table.n_classes)
    i_plus, i_minus = pointwise_terms(models.as_mapping(), trained.model, prior,
                                      x_v, x_t, y)
    decomp = decompose(ids, splits, i_plus, i_minus)
    return EstimationResult(models, trained.model, prior, decomp,
                            ent_hist, trained.history, pca_models)


# ---------------------------------------------------------------------------
# Exports

CSV_FIELDS = ("sample_id", "r_plus", "r_minus", "r", "u_V", "u_T", "s")


def write_decomposition_csv(decomp: PointwiseDecomposition, path: str) -> None:
    """Pointwise rows rendered with 9 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for i, sid in enumerate(decomp.sample_ids):
            writer.writerow([sid] + [f"{v:.9g}" for v in (
                decomp.r_plus[i], decomp.r_minus[i], decomp.r[i],
                decomp.u_v[i], decomp.u_t[i], decomp.s[i])])


def read_decomposition_csv(path: str) -> PointwiseDecomposition:
    ids, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"decomposition CSV missing columns {sorted(missing)}")
        for row in reader:
            ids.append(row["sample_id"])
            rows.append([float(row[k]) for k in CSV_FIELDS[1:]])
    arr = np.asarray(rows, dtype=np.float64).reshape(len(ids), 6)
    nan = np.full((len(ids), 3), np.nan)
    return PointwiseDecomposition(ids, ["train"] * len(ids), nan, nan,
                                  arr[:, 0], arr[:, 1], arr[:, 2],
                                  arr[:, 3], arr[:, 4], arr[:, 5])


def write_aggregates_json(agg: AggregateInteractions, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(agg.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_aggregates_json(path: str) -> AggregateInteractions:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return AggregateInteractions(data["R"], data["U_V"], data["U_T"], data["S"])
