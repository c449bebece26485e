"""Shared learner plumbing: schema checks, scoring, preprocessing."""

from __future__ import annotations

import enum

import numpy as np

from aok.core import ColumnKind, OcclusionLabel


class LearnerError(ValueError):
    pass


class ModelKind(enum.Enum):
    RANDOM_FOREST = "RandomForest"
    NAIVE_BAYES = "NaiveBayes"
    LOGISTIC = "Logistic"
    LINEAR_SVM = "LinearSVM"
    MLP = "MLP"


def check_schema(model_schema, matrix):
    if model_schema != matrix.schema():
        raise LearnerError(
            "feature schema mismatch: model was trained on different columns"
        )


def check_two_classes(y):
    if len(np.unique(y)) < 2:
        raise LearnerError("training data holds a single class")


def score_to_label(score):
    """Scores are P(CompleteOcclusion); exact ties go to CompleteOcclusion."""
    return (
        OcclusionLabel.COMPLETE_OCCLUSION
        if score >= 0.5
        else OcclusionLabel.PARTIAL_OCCLUSION
    )


class Standardizer:
    """Mean/mode imputation followed by per-column standardization.

    Fill values, means, and scales all come from the training matrix;
    categorical columns enter as their category index with the training
    mode as fill.  Constant columns get unit scale so they map to zero.
    """

    def fit(self, matrix):
        values, missing = matrix.values, matrix.missing
        n_cols = matrix.n_cols
        self.fill = np.zeros(n_cols)
        for j, col in enumerate(matrix.columns):
            present = values[~missing[:, j], j]
            if len(present) == 0:
                self.fill[j] = 0.0
            elif col.kind is ColumnKind.CATEGORICAL:
                codes, counts = np.unique(present, return_counts=True)
                self.fill[j] = codes[np.argmax(counts)]
            else:
                self.fill[j] = present.mean()
        filled = np.where(missing, self.fill, values)
        self.mean = filled.mean(axis=0) if len(filled) else np.zeros(n_cols)
        std = filled.std(axis=0) if len(filled) else np.ones(n_cols)
        self.std = np.where(std < 1e-9, 1.0, std)
        return self

    def transform(self, matrix):
        filled = np.where(matrix.missing, self.fill, matrix.values)
        return (filled - self.mean) / self.std

    def to_dict(self):
        return {
            "fill": self.fill.tolist(),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        out = cls()
        out.fill = np.asarray(doc["fill"], dtype=float)
        out.mean = np.asarray(doc["mean"], dtype=float)
        out.std = np.asarray(doc["std"], dtype=float)
        return out


def schema_to_json(schema):
    return [[name, kind.value, list(cats)] for name, kind, cats in schema]


def schema_from_json(doc):
    return tuple(
        (name, ColumnKind(kind), tuple(cats)) for name, kind, cats in doc
    )
