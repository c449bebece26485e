"""Cross-validated evaluation and reporting.

Stratified k-fold with pooled confusion metrics, Wald 95% intervals,
rank-based ROC AUC, paired t-tests over repetitions, Dice scoring for
segmentations, and the seven-column report layout.

The interval convention deliberately uses the total case count n for
every metric, sensitivity and specificity included; that is what the
reference result table's printed intervals encode.  per_class_n=True
switches to the per-class denominators instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import stats

from aok.core import FeatureSetId, OcclusionLabel
from aok.learners.base import score_to_label

Z95 = 1.96


class EvaluationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# folds

@dataclass(frozen=True)
class CVConfig:
    k: int = 10
    seed: int = 0
    repetitions: int = 1
    stratified: bool = True

    def __post_init__(self):
        if self.k < 2:
            raise EvaluationError(f"k must be >= 2, got {self.k}")
        if self.repetitions < 1:
            raise EvaluationError(f"repetitions must be >= 1, got {self.repetitions}")


def stratified_folds(labels, cfg):
    """Disjoint fold index arrays; per-class shuffle dealt round-robin.

    labels may be OcclusionLabel values or 0/1 ints.  Dealing continues
    across classes from a rotating fold offset so fold sizes differ by
    at most one.  Deterministic for a fixed seed.
    """
    y = np.array(
        [
            1 if (lab is OcclusionLabel.COMPLETE_OCCLUSION or lab == 1) else 0
            for lab in labels
        ]
    )
    n = len(y)
    if n < cfg.k:
        raise EvaluationError(f"need at least k={cfg.k} cases, got {n}")
    rng = np.random.default_rng(cfg.seed)
    folds = [[] for _ in range(cfg.k)]
    if cfg.stratified:
        offset = 0
        for cls in np.unique(y):
            idx = np.nonzero(y == cls)[0]
            if len(idx) < cfg.k:
                raise EvaluationError(
                    f"class {cls} has {len(idx)} cases, fewer than k={cfg.k}; "
                    "use stratified=False"
                )
            rng.shuffle(idx)
            for i, row in enumerate(idx):
                folds[(offset + i) % cfg.k].append(row)
            offset = (offset + len(idx)) % cfg.k
    else:
        idx = np.arange(n)
        rng.shuffle(idx)
        for i, row in enumerate(idx):
            folds[i % cfg.k].append(row)
    return [np.array(sorted(f), dtype=int) for f in folds]


# ---------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class Confusion:
    """Counts with CompleteOcclusion as the positive class."""

    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fn + self.fp + self.tn

    @property
    def n_co(self):
        return self.tp + self.fn

    @property
    def n_po(self):
        return self.fp + self.tn

    def __add__(self, other):
        return Confusion(
            self.tp + other.tp,
            self.fn + other.fn,
            self.fp + other.fp,
            self.tn + other.tn,
        )


def build_confusion(y_true, y_pred):
    t = np.asarray(y_true).astype(int)
    p = np.asarray(y_pred).astype(int)
    return Confusion(
        tp=int(((t == 1) & (p == 1)).sum()),
        fn=int(((t == 1) & (p == 0)).sum()),
        fp=int(((t == 0) & (p == 1)).sum()),
        tn=int(((t == 0) & (p == 0)).sum()),
    )


@dataclass(frozen=True)
class MetricCI:
    point: float
    ci_low: float
    ci_high: float

    def __post_init__(self):
        if not (0.0 <= self.ci_low <= self.point <= self.ci_high <= 1.0):
            raise EvaluationError(
                f"interval out of order: {self.ci_low}, {self.point}, {self.ci_high}"
            )


METRIC_NAMES = (
    "accuracy",
    "specificity",
    "sensitivity",
    "weighted_f1",
    "roc",
    "f1_co",
    "f1_po",
)
PERCENT_METRICS = ("accuracy", "specificity", "sensitivity")


@dataclass(frozen=True)
class MetricBlock:
    accuracy: MetricCI
    specificity: MetricCI
    sensitivity: MetricCI
    weighted_f1: MetricCI
    roc: MetricCI
    f1_co: MetricCI
    f1_po: MetricCI
    n: int
    confusion: Confusion

    def metric(self, name):
        if name not in METRIC_NAMES:
            raise EvaluationError(f"unknown metric {name!r}")
        return getattr(self, name)

    def to_dict(self):
        doc = {"n": self.n, "confusion": {
            "tp": self.confusion.tp, "fn": self.confusion.fn,
            "fp": self.confusion.fp, "tn": self.confusion.tn}}
        for name in METRIC_NAMES:
            m = self.metric(name)
            doc[name] = {"point": m.point, "ci_low": m.ci_low, "ci_high": m.ci_high}
        return doc


def _ratio(num, den):
    return num / den if den > 0 else 0.0


def _f1(precision, recall):
    return _ratio(2.0 * precision * recall, precision + recall)


def wald_interval(p, n):
    """p +/- 1.96*sqrt(p(1-p)/n), clamped to [0, 1]."""
    if n <= 0:
        raise EvaluationError("interval needs n > 0")
    half = Z95 * math.sqrt(p * (1.0 - p) / n)
    return MetricCI(
        point=p, ci_low=max(0.0, p - half), ci_high=min(1.0, p + half)
    )


def roc_auc(y_true, scores):
    """Mann-Whitney AUC of score_co; ties count one half."""
    t = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=float)
    n_pos = int((t == 1).sum())
    n_neg = len(t) - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    ranks = stats.rankdata(s)  # average ranks handle ties as half wins
    r_pos = ranks[t == 1].sum()
    return float((r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def metric_block(confusion, y_true, scores, per_class_n=False):
    """The seven-metric block with 95% intervals from one confusion matrix.

    y_true and scores carry the pooled per-case scores for the AUC; the
    confusion must summarize the same predictions.  All intervals use
    the total n unless per_class_n switches sensitivity/specificity and
    the per-class F1s to their own class sizes.
    """
    n = confusion.total
    if n == 0:
        raise EvaluationError("empty confusion matrix")
    if len(y_true) != n or len(scores) != n:
        raise EvaluationError("scores must cover exactly the confusion's n cases")

    acc = _ratio(confusion.tp + confusion.tn, n)
    sens = _ratio(confusion.tp, confusion.tp + confusion.fn)
    spec = _ratio(confusion.tn, confusion.tn + confusion.fp)
    prec_co = _ratio(confusion.tp, confusion.tp + confusion.fp)
    prec_po = _ratio(confusion.tn, confusion.tn + confusion.fn)
    f1_co = _f1(prec_co, sens)
    f1_po = _f1(prec_po, spec)
    wf1 = _ratio(confusion.n_co * f1_co + confusion.n_po * f1_po, n)
    auc = roc_auc(y_true, scores)

    n_sens = confusion.n_co if per_class_n else n
    n_spec = confusion.n_po if per_class_n else n
    return MetricBlock(
        accuracy=wald_interval(acc, n),
        specificity=wald_interval(spec, n_spec),
        sensitivity=wald_interval(sens, n_sens),
        weighted_f1=wald_interval(wf1, n),
        roc=wald_interval(auc, n),
        f1_co=wald_interval(f1_co, n_sens),
        f1_po=wald_interval(f1_po, n_spec),
        n=n,
        confusion=confusion,
    )


# ---------------------------------------------------------------------------
# cross-validation

@dataclass(frozen=True)
class CVResult:
    pooled: MetricBlock
    per_fold: tuple  # MetricBlock per fold, first repetition
    rep_blocks: tuple  # pooled MetricBlock per repetition
    scores: np.ndarray  # pooled held-out scores, first repetition
    y_true: np.ndarray

    @property
    def rep_weighted_f1(self):
        return tuple(b.weighted_f1.point for b in self.rep_blocks)

    @property
    def rep_accuracy(self):
        return tuple(b.accuracy.point for b in self.rep_blocks)


def cross_validate(matrix, learner_factory, cfg, per_class_n=False):
    """k-fold CV: train on k-1 folds, score the held-out fold, pool.

    learner_factory(seed) must return an unfitted model.  Repetition r
    reshuffles folds and reseeds the learner with seed+r; the first
    repetition supplies the headline pooled block and per-fold blocks.
    """
    y = matrix.label_array()
    per_fold = []
    rep_blocks = []
    first_scores = None
    for r in range(cfg.repetitions):
        rep_cfg = CVConfig(
            k=cfg.k, seed=cfg.seed + r, repetitions=1, stratified=cfg.stratified
        )
        folds = stratified_folds(matrix.labels, rep_cfg)
        scores = np.zeros(len(y))
        for fold in folds:
            train_idx = np.setdiff1d(np.arange(len(y)), fold)
            model = learner_factory(cfg.seed + r)
            model.fit(matrix.select_rows(train_idx))
            fold_scores = model.predict_scores(matrix.select_rows(fold))
            scores[fold] = fold_scores
            if r == 0:
                pred = np.array([1 if s >= 0.5 else 0 for s in fold_scores])
                per_fold.append(
                    metric_block(
                        build_confusion(y[fold], pred),
                        y[fold],
                        fold_scores,
                        per_class_n=per_class_n,
                    )
                )
        pred = np.array([1 if s >= 0.5 else 0 for s in scores])
        rep_blocks.append(
            metric_block(
                build_confusion(y, pred), y, scores, per_class_n=per_class_n
            )
        )
        if r == 0:
            first_scores = scores
    return CVResult(
        pooled=rep_blocks[0],
        per_fold=tuple(per_fold),
        rep_blocks=tuple(rep_blocks),
        scores=first_scores,
        y_true=y,
    )


# ---------------------------------------------------------------------------
# paired t-test

def paired_ttest(a, b):
    """Two-sided paired t-test; returns (t, p).

    Degenerate difference vectors follow fixed rules: all differences
    zero gives (0.0, 1.0); constant nonzero differences give p exactly 0
    with an infinite t.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise EvaluationError("paired samples must be equal-length 1D with n >= 2")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(len(d)))
    p = 2.0 * float(stats.t.sf(abs(t), len(d) - 1))
    return t, min(1.0, p)


# ---------------------------------------------------------------------------
# Dice

@dataclass(frozen=True)
class DiceResult:
    values: tuple
    mean: float
    ci_low: float
    ci_high: float


def dice(a, b, empty_value=1.0):
    """2|A n B| / (|A| + |B|); two empty masks score empty_value."""
    if a.voxels.shape != b.voxels.shape:
        raise EvaluationError(
            f"mask dims differ: {a.voxels.shape} vs {b.voxels.shape}"
        )
    if a.spacing_mm != b.spacing_mm:
        raise EvaluationError(
            f"mask spacings differ: {a.spacing_mm} vs {b.spacing_mm}"
        )
    total = a.foreground_count + b.foreground_count
    if total == 0:
        return empty_value
    inter = int((a.voxels & b.voxels).sum())
    return 2.0 * inter / total


def dice_summary(values):
    """Mean Dice with a normal CI (mean +/- 1.96*sd/sqrt(n), clamped)."""
    vals = tuple(float(v) for v in values)
    if not vals:
        raise EvaluationError("no dice values")
    mean = float(np.mean(vals))
    if len(vals) < 2:
        return DiceResult(values=vals, mean=mean, ci_low=mean, ci_high=mean)
    half = Z95 * float(np.std(vals, ddof=1)) / math.sqrt(len(vals))
    return DiceResult(
        values=vals,
        mean=mean,
        ci_low=max(0.0, mean - half),
        ci_high=min(1.0, mean + half),
    )


# ---------------------------------------------------------------------------
# reporting

_COLUMN_TITLES = {
    "accuracy": "Accuracy (95% CI)",
    "specificity": "Specificity (95% CI)",
    "sensitivity": "Sensitivity (95% CI)",
    "weighted_f1": "Weighted F1 Score (95% CI)",
    "roc": "ROC (95% CI)",
    "f1_co": "F1 Score: Complete Occlusion (95% CI)",
    "f1_po": "F1 Score: Partial Occlusion (95% CI)",
}


def format_metric(name, m):
    if name in PERCENT_METRICS:
        return f"{m.point * 100:.1f}% ({m.ci_low * 100:.1f}% - {m.ci_high * 100:.1f}%)"
    return f"{m.point:.2f} ({m.ci_low:.2f} - {m.ci_high:.2f})"


def report(blocks):
    """Plain-text table over feature sets, columns in the fixed order."""
    if not blocks:
        raise EvaluationError("no metric blocks to report")
    keys = sorted(
        blocks, key=lambda k: k.value if isinstance(k, FeatureSetId) else str(k)
    )
    header = ["Feature set"] + [_COLUMN_TITLES[m] for m in METRIC_NAMES]
    rows = [header]
    for key in keys:
        block = blocks[key]
        label = key.value if isinstance(key, FeatureSetId) else str(key)
        rows.append(
            [label] + [format_metric(m, block.metric(m)) for m in METRIC_NAMES]
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def report_json(blocks):
    doc = {}
    for key, block in blocks.items():
        label = key.value if isinstance(key, FeatureSetId) else str(key)
        doc[label] = block.to_dict()
    return doc


def load_table3():
    """The transcribed reference results fixture shipped with the package."""
    text = resources.files("aok").joinpath("data/table3.json").read_text()
    return json.loads(text)
