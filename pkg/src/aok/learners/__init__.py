"""The five outcome classifiers with explicit missing-value contracts."""

from aok.learners.base import LearnerError, ModelKind, score_to_label
from aok.learners.forest import ForestConfig, RandomForest, train_forest
from aok.learners.models import (
    GaussianNaiveBayes,
    LinearSVM,
    LogisticModel,
    SigmoidMLP,
    mlp_loss_and_grad,
    train_logistic,
    train_mlp,
    train_naive_bayes,
    train_svm,
)
from aok.learners.persist import load_model, save_model


def predict(model, matrix):
    """Per-row (label, score_co) pairs from any trained model."""
    scores = model.predict_scores(matrix)
    return [(score_to_label(s), float(s)) for s in scores]


__all__ = [
    "ForestConfig",
    "GaussianNaiveBayes",
    "LearnerError",
    "LinearSVM",
    "LogisticModel",
    "ModelKind",
    "RandomForest",
    "SigmoidMLP",
    "load_model",
    "mlp_loss_and_grad",
    "predict",
    "save_model",
    "score_to_label",
    "train_forest",
    "train_logistic",
    "train_mlp",
    "train_naive_bayes",
    "train_svm",
]
