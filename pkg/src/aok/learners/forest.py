"""Random forest of information-gain trees with fractional missing handling.

Missing values follow the C4.5 treatment: at a split, a training row
with no value descends every branch carrying weight proportional to the
branch's share of the non-missing weight, the split's gain is scaled by
the non-missing fraction, and prediction blends the branch distributions
by those stored shares.  Categories never seen at a split predict as
missing.  Trees are deterministic per (data, seed); forest-level
randomness comes from one spawned seed per tree, so results do not
depend on how tree training is scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from aok.core import ColumnKind
from aok.learners.base import (
    LearnerError,
    ModelKind,
    check_schema,
    check_two_classes,
    score_to_label,
)

_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    features_per_split: object = "sqrt"  # "sqrt", "all", or a fixed int
    min_leaf: float = 1.0
    max_depth: int | None = None
    seed: int = 0
    bootstrap: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise LearnerError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise LearnerError(f"min_leaf must be >= 1, got {self.min_leaf}")
        fps = self.features_per_split
        if not (fps in ("sqrt", "all") or (isinstance(fps, int) and fps >= 1)):
            raise LearnerError(f"bad features_per_split: {fps!r}")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


def _entropy(w0, w1):
    """Entropy in bits of a weighted two-class distribution (vectorized)."""
    w0 = np.asarray(w0, dtype=float)
    w1 = np.asarray(w1, dtype=float)
    total = w0 + w1
    with np.errstate(divide="ignore", invalid="ignore"):
        p0 = np.where(total > 0, w0 / np.where(total > 0, total, 1.0), 0.0)
        p1 = np.where(total > 0, w1 / np.where(total > 0, total, 1.0), 0.0)
        h = -(
            np.where(p0 > 0, p0 * np.log2(np.where(p0 > 0, p0, 1.0)), 0.0)
            + np.where(p1 > 0, p1 * np.log2(np.where(p1 > 0, p1, 1.0)), 0.0)
        )
    return h


def _numeric_split(v, y, w, h_present, frac, min_leaf):
    """Best threshold split of one numeric column; returns (gain, threshold,
    fractions) or None."""
    order = np.argsort(v, kind="stable")
    sv, sy, sw = v[order], y[order], w[order]
    w1 = np.cumsum(sw * sy)
    w_all = np.cumsum(sw)
    w0 = w_all - w1
    boundary = np.nonzero(sv[:-1] != sv[1:])[0]
    if len(boundary) == 0:
        return None
    left0, left1 = w0[boundary], w1[boundary]
    right0, right1 = w0[-1] - left0, w1[-1] - left1
    wl = left0 + left1
    wr = right0 + right1
    valid = (wl >= min_leaf) & (wr >= min_leaf)
    if not valid.any():
        return None
    w_present = w_all[-1]
    cond = (wl * _entropy(left0, left1) + wr * _entropy(right0, right1)) / w_present
    gain = frac * (h_present - cond)
    gain[~valid] = -np.inf
    best = int(np.argmax(gain))  # argmax takes the first max: lowest threshold
    if gain[best] <= _MIN_GAIN:
        return None
    i = boundary[best]
    threshold = (sv[i] + sv[i + 1]) / 2.0
    return float(gain[best]), threshold, (float(wl[best] / w_present), float(wr[best] / w_present))


def _categorical_split(v, y, w, h_present, frac, min_leaf):
    """Multiway split of one categorical column; returns (gain, values,
    fractions) or None."""
    cats, inverse = np.unique(v, return_inverse=True)
    if len(cats) < 2:
        return None
    w0 = np.zeros(len(cats))
    w1 = np.zeros(len(cats))
    np.add.at(w0, inverse, w * (1 - y))
    np.add.at(w1, inverse, w * y)
    branch_w = w0 + w1
    if (branch_w < min_leaf).any():
        return None
    w_present = branch_w.sum()
    cond = float((branch_w * _entropy(w0, w1)).sum() / w_present)
    gain = frac * (h_present - cond)
    if gain <= _MIN_GAIN:
        return None
    return float(gain), cats, tuple(branch_w / w_present)


class _TreeBuilder:
    def __init__(self, values, missing, y, kinds, cfg, rng):
        self.values = values
        self.missing = missing
        self.y = y
        self.kinds = kinds
        self.cfg = cfg
        self.rng = rng
        n_feat = values.shape[1]
        if cfg.features_per_split == "all":
            self.k = n_feat
        elif cfg.features_per_split == "sqrt":
            self.k = max(1, int(round(math.sqrt(n_feat))))
        else:
            self.k = min(n_feat, cfg.features_per_split)

    def build(self, rows, weights, depth=0):
        w1 = float(weights[self.y[rows] == 1].sum())
        w0 = float(weights.sum()) - w1
        if (
            w0 == 0.0
            or w1 == 0.0
            or (self.cfg.max_depth is not None and depth >= self.cfg.max_depth)
        ):
            return {"counts": [w0, w1]}

        n_feat = self.values.shape[1]
        if self.k < n_feat:
            feats = np.sort(self.rng.choice(n_feat, size=self.k, replace=False))
        else:
            feats = np.arange(n_feat)

        w_node = float(weights.sum())
        best = None  # (gain, feature, payload)
        for f in feats:
            present = ~self.missing[rows, f]
            if present.sum() < 2:
                continue
            v = self.values[rows, f][present]
            yv = self.y[rows][present]
            wv = weights[present]
            w_present = float(wv.sum())
            if w_present <= 0.0:
                continue
            frac = w_present / w_node
            h_present = float(
                _entropy(wv[yv == 0].sum(), wv[yv == 1].sum())
            )
            if self.kinds[f] is ColumnKind.CATEGORICAL:
                found = _categorical_split(
                    v, yv, wv, h_present, frac, self.cfg.min_leaf
                )
            else:
                found = _numeric_split(
                    v, yv, wv, h_present, frac, self.cfg.min_leaf
                )
            if found is None:
                continue
            gain = found[0]
            if best is None or gain > best[0] + _MIN_GAIN:
                best = (gain, f, found)
            # ties keep the lowest feature index: feats is sorted and we
            # only replace on a strict improvement

        if best is None:
            return {"counts": [w0, w1]}
        _, f, found = best
        present = ~self.missing[rows, f]
        absent = ~present
        if self.kinds[f] is ColumnKind.CATEGORICAL:
            _, cats, fractions = found
            children = []
            for cat, p_branch in zip(cats, fractions):
                in_branch = present & (self.values[rows, f] == cat)
                child_rows = np.concatenate([rows[in_branch], rows[absent]])
                child_w = np.concatenate(
                    [weights[in_branch], weights[absent] * p_branch]
                )
                children.append(self.build(child_rows, child_w, depth + 1))
            return {
                "feature": int(f),
                "values": [float(c) for c in cats],
                "fractions": [float(p) for p in fractions],
                "children": children,
            }
        _, threshold, fractions = found
        goes_left = present & (self.values[rows, f] <= threshold)
        goes_right = present & ~goes_left
        children = []
        for side, p_branch in zip((goes_left, goes_right), fractions):
            child_rows = np.concatenate([rows[side], rows[absent]])
            child_w = np.concatenate([weights[side], weights[absent] * p_branch])
            children.append(self.build(child_rows, child_w, depth + 1))
        return {
            "feature": int(f),
            "threshold": float(threshold),
            "fractions": [float(p) for p in fractions],
            "children": children,
        }


def tree_distribution(node, x, miss, kinds):
    """P(class) vector for one row, blending branches where the value is
    missing or the category was unseen at the split."""
    if "counts" in node:
        w0, w1 = node["counts"]
        total = w0 + w1
        if total <= 0:
            return np.array([0.5, 0.5])
        return np.array([w0 / total, w1 / total])
    f = node["feature"]
    if not miss[f]:
        if "threshold" in node:
            child = node["children"][0 if x[f] <= node["threshold"] else 1]
            return tree_distribution(child, x, miss, kinds)
        for value, child in zip(node["values"], node["children"]):
            if x[f] == value:
                return tree_distribution(child, x, miss, kinds)
        # unseen category: fall through to the missing treatment
    dist = np.zeros(2)
    for p_branch, child in zip(node["fractions"], node["children"]):
        dist += p_branch * tree_distribution(child, x, miss, kinds)
    return dist


def _tree_vote(node, x, miss, kinds):
    dist = tree_distribution(node, x, miss, kinds)
    return 1 if dist[1] >= dist[0] else 0


class RandomForest:
    """Bagged information-gain trees voting CompleteOcclusion fraction."""

    kind = ModelKind.RANDOM_FOREST

    def __init__(self, config=None):
        self.config = config or ForestConfig()
        self.trees = None
        self.schema = None
        self.oob_accuracy = None

    def fit(self, matrix):
        y = matrix.label_array()
        check_two_classes(y)
        self.schema = matrix.schema()
        kinds = [c.kind for c in matrix.columns]
        values, missing = matrix.values, matrix.missing
        n = matrix.n_rows
        cfg = self.config

        seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)

        def train_one(seed_seq):
            rng = np.random.default_rng(seed_seq)
            if cfg.bootstrap:
                picks = rng.integers(0, n, size=n)
                counts = np.bincount(picks, minlength=n).astype(float)
                rows = np.nonzero(counts)[0]
                weights = counts[rows]
                oob = counts == 0
            else:
                rows = np.arange(n)
                weights = np.ones(n)
                oob = np.zeros(n, dtype=bool)
            builder = _TreeBuilder(values, missing, y, kinds, cfg, rng)
            return builder.build(rows, weights), oob

        if cfg.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
                trained = list(pool.map(train_one, seeds))
        else:
            trained = [train_one(s) for s in seeds]
        self.trees = [t for t, _ in trained]

        if cfg.bootstrap:
            votes = np.zeros((n, 2))
            for tree, oob in trained:
                for i in np.nonzero(oob)[0]:
                    votes[i, _tree_vote(tree, values[i], missing[i], kinds)] += 1
            scored = votes.sum(axis=1) > 0
            if scored.any():
                pred = votes[:, 1] >= votes[:, 0]  # ties toward CompleteOcclusion
                self.oob_accuracy = float(
                    (pred[scored] == (y[scored] == 1)).mean()
                )
        return self

    def predict_scores(self, matrix):
        if self.trees is None:
            raise LearnerError("model is not fitted")
        check_schema(self.schema, matrix)
        kinds = [c.kind for c in matrix.columns]
        scores = np.zeros(matrix.n_rows)
        for i in range(matrix.n_rows):
            votes = sum(
                _tree_vote(tree, matrix.values[i], matrix.missing[i], kinds)
                for tree in self.trees
            )
            scores[i] = votes / len(self.trees)
        return scores

    def predict(self, matrix):
        return [score_to_label(s) for s in self.predict_scores(matrix)]


def train_forest(matrix, config=None):
    return RandomForest(config).fit(matrix)
