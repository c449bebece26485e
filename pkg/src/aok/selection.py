"""Two-stage feature selection.

Stage one screens health conditions by class prevalence: a condition
survives when either class carries it at a ratio of at least 0.30 and
the absolute between-class difference is at least 0.10.  Stage two ranks
feature columns by information gain (in bits, with a missing-fraction
penalty) and keeps those strictly above 0.15, optionally refined by a
greedy forward pass scored with cross-validated weighted F1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from aok.core import ColumnKind, ConditionVocabulary, OcclusionLabel

RATIO_THRESHOLD = 0.30
DIFF_THRESHOLD = 0.10
IG_THRESHOLD = 0.15


class SelectionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# stage 1: condition prevalence

@dataclass(frozen=True)
class PrevalenceEntry:
    condition: str
    ratio_co: float
    ratio_po: float
    abs_diff: float
    kept_stage1: bool
    kept_stage2: bool

    def __post_init__(self):
        if self.abs_diff != abs(self.ratio_co - self.ratio_po):
            raise SelectionError("abs_diff must equal |ratio_co - ratio_po|")


@dataclass(frozen=True)
class PrevalenceReport:
    entries: tuple
    ratio_threshold: float
    diff_threshold: float

    def entry(self, condition):
        for e in self.entries:
            if e.condition == condition:
                return e
        raise SelectionError(f"no such condition in report: {condition!r}")

    def selected(self):
        return tuple(e.condition for e in self.entries if e.kept_stage2)

    def to_dict(self):
        return {
            "ratio_threshold": self.ratio_threshold,
            "diff_threshold": self.diff_threshold,
            "conditions": [
                {
                    "condition": e.condition,
                    "ratio_co": e.ratio_co,
                    "ratio_po": e.ratio_po,
                    "abs_diff": e.abs_diff,
                    "kept_stage1": e.kept_stage1,
                    "kept_stage2": e.kept_stage2,
                }
                for e in self.entries
            ],
        }


def prevalence_select(
    cohort,
    vocab=None,
    ratio_threshold=RATIO_THRESHOLD,
    diff_threshold=DIFF_THRESHOLD,
):
    """Class-prevalence screen over every vocabulary condition.

    ratio_class = cases in the class carrying the condition / class size.
    Stage 1 keeps conditions whose larger class ratio reaches
    ratio_threshold; stage 2 additionally requires the absolute ratio
    difference to reach diff_threshold.  Both boundaries are inclusive.
    """
    vocab = vocab or ConditionVocabulary.default()
    co = [rec for rec, lab in cohort if lab is OcclusionLabel.COMPLETE_OCCLUSION]
    po = [rec for rec, lab in cohort if lab is OcclusionLabel.PARTIAL_OCCLUSION]
    if not co or not po:
        raise SelectionError(
            f"both classes must be populated, got {len(co)} CO / {len(po)} PO"
        )

    entries = []
    for _, conds in vocab.systems:
        for cond in conds:
            r_co = sum(1 for rec in co if cond in rec.conditions) / len(co)
            r_po = sum(1 for rec in po if cond in rec.conditions) / len(po)
            diff = abs(r_co - r_po)
            s1 = max(r_co, r_po) >= ratio_threshold
            s2 = s1 and diff >= diff_threshold
            entries.append(
                PrevalenceEntry(
                    condition=cond,
                    ratio_co=r_co,
                    ratio_po=r_po,
                    abs_diff=diff,
                    kept_stage1=s1,
                    kept_stage2=s2,
                )
            )
    return PrevalenceReport(
        entries=tuple(entries),
        ratio_threshold=ratio_threshold,
        diff_threshold=diff_threshold,
    )


# ---------------------------------------------------------------------------
# stage 2: information gain

def _entropy_bits(labels):
    if len(labels) == 0:
        return 0.0
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log2(p)))


def information_gain(values, missing, labels, kind=ColumnKind.NUMERIC):
    """Information gain of one column against the labels, in bits.

    Non-missing rows carry the split; the result is scaled by the
    non-missing fraction.  Categorical columns split multiway over their
    distinct values; numeric columns take the best binary threshold at
    midpoints between consecutive distinct sorted values.  An all-missing
    column gains nothing (0.0).
    """
    values = np.asarray(values, dtype=float)
    missing = np.asarray(missing, dtype=bool)
    labels = np.asarray(labels)
    n = len(values)
    if n == 0 or missing.all():
        return 0.0
    v = values[~missing]
    y = labels[~missing]
    frac = len(v) / n
    h = _entropy_bits(y)
    if h == 0.0:
        return 0.0

    if kind is ColumnKind.CATEGORICAL:
        cond = 0.0
        for val in np.unique(v):
            sel = v == val
            cond += sel.sum() / len(v) * _entropy_bits(y[sel])
        return max(0.0, frac * (h - cond))

    order = np.argsort(v, kind="stable")
    sv, sy = v[order], y[order]
    distinct = np.unique(sv)
    best = 0.0
    for lo, hi in zip(distinct[:-1], distinct[1:]):
        t = (lo + hi) / 2.0
        left = sv <= t
        h_left = _entropy_bits(sy[left])
        h_right = _entropy_bits(sy[~left])
        p_left = left.sum() / len(sv)
        gain = h - (p_left * h_left + (1.0 - p_left) * h_right)
        if gain > best:
            best = gain
    return max(0.0, frac * best)


def rank_features(matrix, threshold=IG_THRESHOLD):
    """Rank every column by information gain, descending, ties by name.

    Returns (kept_names, ranking) where ranking is a list of
    (name, gain) and kept_names holds those with gain strictly above
    the threshold, in rank order.
    """
    if matrix.n_cols == 0:
        raise SelectionError("matrix has no columns")
    y = matrix.label_array()
    gains = []
    for j, col in enumerate(matrix.columns):
        g = information_gain(
            matrix.values[:, j], matrix.missing[:, j], y, kind=col.kind
        )
        gains.append((col.name, g))
    ranking = sorted(gains, key=lambda item: (-item[1], item[0]))
    kept = [name for name, g in ranking if g > threshold]
    return kept, ranking


# ---------------------------------------------------------------------------
# greedy forward refinement

def greedy_forward(matrix, base, candidates, cv, epsilon=0.001, forest_config=None):
    """Greedy forward selection scored by cross-validated weighted F1.

    Starting from the base columns, each round evaluates base+candidate
    for every remaining candidate with a random forest under the given
    CV configuration, and accepts the best one when it beats the
    incumbent score by more than epsilon.  Returns (final_names, trace);
    the trace records every evaluation as a dict.  Deterministic for a
    fixed matrix and cv seed; base columns are never removed.
    """
    from aok.evaluation import cross_validate
    from aok.learners.forest import ForestConfig, RandomForest

    base = list(base)
    for name in base + list(candidates):
        matrix.col_index(name)  # raises on unknown columns
    forest_config = forest_config or ForestConfig()

    def score(names):
        sub = matrix.select_columns(names)
        result = cross_validate(
            sub,
            lambda seed: RandomForest(forest_config.with_seed(seed)),
            cv,
        )
        return result.pooled.weighted_f1.point

    incumbent = score(base) if base else 0.0
    trace = [
        {"iteration": 0, "candidate": None, "weighted_f1": incumbent, "accepted": True}
    ]
    remaining = list(candidates)
    iteration = 0
    while remaining:
        iteration += 1
        best_name, best_score = None, -math.inf
        evals = []
        for name in remaining:
            s = score(base + [name])
            evals.append((name, s))
            if s > best_score:
                best_name, best_score = name, s
        accepted = best_score > incumbent + epsilon
        for name, s in evals:
            trace.append(
                {
                    "iteration": iteration,
                    "candidate": name,
                    "weighted_f1": s,
                    "accepted": accepted and name == best_name,
                }
            )
        if not accepted:
            break
        base.append(best_name)
        remaining.remove(best_name)
        incumbent = best_score
    return base, trace


def selection_report(prevalence=None, ranking=None, kept=None, trace=None):
    """Bundle the selection outputs into one JSON-ready dict."""
    doc = {}
    if prevalence is not None:
        doc["prevalence"] = prevalence.to_dict()
    if ranking is not None:
        doc["ranking"] = [{"feature": n, "information_gain": g} for n, g in ranking]
    if kept is not None:
        doc["kept"] = list(kept)
    if trace is not None:
        doc["greedy_trace"] = trace
    return doc
