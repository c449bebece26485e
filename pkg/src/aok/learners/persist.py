"""Versioned JSON save/load for trained models.

Layout: {"format": "aok-model", "version": 1, "kind": <ModelKind value>,
"schema": [[name, kind, [categories...]], ...], "payload": {...}} where
the payload is kind-specific.  Forest trees serialize as nested split
records: leaves are {"counts": [w_po, w_co]}, numeric splits carry
"feature"/"threshold"/"fractions"/"children", categorical splits
"feature"/"values"/"fractions"/"children".
"""

from __future__ import annotations

import json

import numpy as np

from aok.learners.base import (
    LearnerError,
    ModelKind,
    Standardizer,
    schema_from_json,
    schema_to_json,
)
from aok.learners.forest import ForestConfig, RandomForest
from aok.learners.models import GaussianNaiveBayes, LinearSVM, LogisticModel, SigmoidMLP

FORMAT = "aok-model"
VERSION = 1


def _forest_payload(model):
    cfg = model.config
    return {
        "config": {
            "n_trees": cfg.n_trees,
            "features_per_split": cfg.features_per_split,
            "min_leaf": cfg.min_leaf,
            "max_depth": cfg.max_depth,
            "seed": cfg.seed,
            "bootstrap": cfg.bootstrap,
        },
        "oob_accuracy": model.oob_accuracy,
        "trees": model.trees,
    }


def _forest_restore(payload, schema):
    cfg = payload["config"]
    fps = cfg["features_per_split"]
    model = RandomForest(
        ForestConfig(
            n_trees=cfg["n_trees"],
            features_per_split=fps if isinstance(fps, str) else int(fps),
            min_leaf=cfg["min_leaf"],
            max_depth=cfg["max_depth"],
            seed=cfg["seed"],
            bootstrap=cfg["bootstrap"],
        )
    )
    model.trees = payload["trees"]
    model.oob_accuracy = payload["oob_accuracy"]
    model.schema = schema
    return model


def _nb_payload(model):
    stats = []
    for entry in model.stats:
        if entry is None:
            stats.append(None)
        elif entry[0] == "cat":
            stats.append(["cat", [entry[1][0].tolist(), entry[1][1].tolist()]])
        else:
            stats.append(["num", entry[1], entry[2]])
    return {"log_prior": model.log_prior.tolist(), "stats": stats}


def _nb_restore(payload, schema):
    model = GaussianNaiveBayes()
    model.schema = schema
    model.log_prior = np.asarray(payload["log_prior"])
    stats = []
    for entry in payload["stats"]:
        if entry is None:
            stats.append(None)
        elif entry[0] == "cat":
            stats.append(("cat", [np.asarray(entry[1][0]), np.asarray(entry[1][1])]))
        else:
            stats.append(("num", list(entry[1]), list(entry[2])))
    model.stats = stats
    return model


def _linear_payload(model):
    doc = {
        "scaler": model.scaler.to_dict(),
        "weights": model.weights.tolist(),
        "intercept": model.intercept,
    }
    if model.kind is ModelKind.LOGISTIC:
        doc["ridge"] = model.ridge
        doc["converged"] = model.converged
    else:
        doc["C"] = model.C
        doc["epochs"] = model.epochs
        doc["platt"] = list(model.platt)
    return doc


def _mlp_payload(model):
    return {
        "hidden": model.hidden,
        "epochs": model.epochs,
        "lr": model.lr,
        "seed": model.seed,
        "scaler": model.scaler.to_dict(),
        "params": model.params.tolist(),
    }


def save_model(model, path):
    if model.schema is None:
        raise LearnerError("cannot save an unfitted model")
    if model.kind is ModelKind.RANDOM_FOREST:
        payload = _forest_payload(model)
    elif model.kind is ModelKind.NAIVE_BAYES:
        payload = _nb_payload(model)
    elif model.kind in (ModelKind.LOGISTIC, ModelKind.LINEAR_SVM):
        payload = _linear_payload(model)
    elif model.kind is ModelKind.MLP:
        payload = _mlp_payload(model)
    else:
        raise LearnerError(f"unknown model kind {model.kind!r}")
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "kind": model.kind.value,
        "schema": schema_to_json(model.schema),
        "payload": payload,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT:
        raise LearnerError(f"{path}: not an {FORMAT} file")
    if doc.get("version") != VERSION:
        raise LearnerError(f"{path}: unsupported version {doc.get('version')}")
    kind = ModelKind(doc["kind"])
    schema = schema_from_json(doc["schema"])
    payload = doc["payload"]

    if kind is ModelKind.RANDOM_FOREST:
        return _forest_restore(payload, schema)
    if kind is ModelKind.NAIVE_BAYES:
        return _nb_restore(payload, schema)
    if kind is ModelKind.LOGISTIC:
        model = LogisticModel(ridge=payload["ridge"])
        model.converged = payload["converged"]
    elif kind is ModelKind.LINEAR_SVM:
        model = LinearSVM(C=payload["C"], epochs=payload["epochs"])
        model.platt = tuple(payload["platt"])
    elif kind is ModelKind.MLP:
        model = SigmoidMLP(
            hidden=payload["hidden"],
            epochs=payload["epochs"],
            lr=payload["lr"],
            seed=payload["seed"],
        )
        model.params = np.asarray(payload["params"])
        model.scaler = Standardizer.from_dict(payload["scaler"])
        model.schema = schema
        return model
    else:
        raise LearnerError(f"unknown model kind {kind!r}")
    model.scaler = Standardizer.from_dict(payload["scaler"])
    model.weights = np.asarray(payload["weights"])
    model.intercept = payload["intercept"]
    model.schema = schema
    return model
