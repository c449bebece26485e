"""Naive Bayes, logistic regression, linear SVM, and a small MLP.

Missing-value contracts: naive Bayes skips missing cells in both its
sufficient statistics and its prediction product; the three gradient
learners impute training means (modes for categoricals) and standardize.
All emit a real-valued CompleteOcclusion score in [0, 1] for ROC.
"""

from __future__ import annotations

import math

import numpy as np

from aok.core import ColumnKind
from aok.learners.base import (
    LearnerError,
    ModelKind,
    Standardizer,
    check_schema,
    check_two_classes,
    score_to_label,
)

VAR_FLOOR = 1e-9


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ---------------------------------------------------------------------------
# naive Bayes

class GaussianNaiveBayes:
    """Gaussian likelihoods per numeric column, Laplace (alpha=1) frequencies
    per categorical; missing cells contribute nothing."""

    kind = ModelKind.NAIVE_BAYES

    def __init__(self):
        self.schema = None
        self.log_prior = None
        self.stats = None  # per column: ("num", means[2], vars[2]) or ("cat", logp[2][k]) or None

    def fit(self, matrix):
        y = matrix.label_array()
        check_two_classes(y)
        self.schema = matrix.schema()
        n = matrix.n_rows
        counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=float)
        self.log_prior = np.log(counts / n)

        self.stats = []
        for j, col in enumerate(matrix.columns):
            present = ~matrix.missing[:, j]
            per_class = []
            ok = True
            if col.kind is ColumnKind.CATEGORICAL:
                k = len(col.categories)
                for c in (0, 1):
                    sel = present & (y == c)
                    vals = matrix.values[sel, j].astype(int)
                    freq = np.bincount(vals, minlength=k).astype(float)
                    per_class.append(np.log((freq + 1.0) / (sel.sum() + k)))
                self.stats.append(("cat", per_class))
            else:
                means, variances = [], []
                for c in (0, 1):
                    sel = present & (y == c)
                    if sel.sum() == 0:
                        ok = False
                        break
                    vals = matrix.values[sel, j]
                    means.append(float(vals.mean()))
                    variances.append(max(float(vals.var()), VAR_FLOOR))
                # a column one class never observed cannot be compared fairly;
                # it is skipped for both classes
                self.stats.append(("num", means, variances) if ok else None)
        return self

    def predict_scores(self, matrix):
        if self.stats is None:
            raise LearnerError("model is not fitted")
        check_schema(self.schema, matrix)
        scores = np.zeros(matrix.n_rows)
        for i in range(matrix.n_rows):
            log_post = self.log_prior.copy()
            for j, col in enumerate(matrix.columns):
                if matrix.missing[i, j] or self.stats[j] is None:
                    continue
                v = matrix.values[i, j]
                if self.stats[j][0] == "cat":
                    _, per_class = self.stats[j]
                    idx = int(v)
                    for c in (0, 1):
                        log_post[c] += per_class[c][idx]
                else:
                    _, means, variances = self.stats[j]
                    for c in (0, 1):
                        var = variances[c]
                        log_post[c] += -0.5 * (
                            math.log(2.0 * math.pi * var) + (v - means[c]) ** 2 / var
                        )
            shift = log_post - log_post.max()
            p = np.exp(shift)
            scores[i] = p[1] / p.sum()
        return scores

    def predict(self, matrix):
        return [score_to_label(s) for s in self.predict_scores(matrix)]


def train_naive_bayes(matrix):
    return GaussianNaiveBayes().fit(matrix)


# ---------------------------------------------------------------------------
# logistic regression

class LogisticModel:
    """L2-regularized logistic regression on imputed standardized features.

    Gradient ascent with backtracking; converged means the gradient norm
    dropped under 1e-6 within the iteration budget (a False flag is a
    warning, not an error).  The intercept is not penalized.
    """

    kind = ModelKind.LOGISTIC

    def __init__(self, ridge=1e-8, max_iter=500, tol=1e-6):
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol
        self.schema = None
        self.scaler = None
        self.weights = None
        self.intercept = None
        self.converged = None

    def _objective(self, z, y, w, b):
        logits = z @ w + b
        # log-likelihood via the numerically stable log(1+exp)
        ll = float(np.sum(y * logits - np.logaddexp(0.0, logits)))
        return ll - 0.5 * self.ridge * float(w @ w)

    def fit(self, matrix):
        y = matrix.label_array().astype(float)
        check_two_classes(matrix.label_array())
        self.schema = matrix.schema()
        self.scaler = Standardizer().fit(matrix)
        z = self.scaler.transform(matrix)
        n, d = z.shape
        w = np.zeros(d)
        b = 0.0
        self.converged = False
        step = 1.0
        obj = self._objective(z, y, w, b)
        for _ in range(self.max_iter):
            p = _sigmoid(z @ w + b)
            grad_w = z.T @ (y - p) - self.ridge * w
            grad_b = float(np.sum(y - p))
            norm = math.sqrt(float(grad_w @ grad_w) + grad_b * grad_b)
            if norm < self.tol:
                self.converged = True
                break
            step = min(step * 2.0, 1e6)
            while step > 1e-12:
                w_new = w + step / n * grad_w
                b_new = b + step / n * grad_b
                obj_new = self._objective(z, y, w_new, b_new)
                if obj_new >= obj:
                    break
                step /= 2.0
            w, b, obj = w_new, b_new, obj_new
        self.weights = w
        self.intercept = b
        return self

    def predict_scores(self, matrix):
        if self.weights is None:
            raise LearnerError("model is not fitted")
        check_schema(self.schema, matrix)
        z = self.scaler.transform(matrix)
        return _sigmoid(z @ self.weights + self.intercept)

    def predict(self, matrix):
        return [score_to_label(s) for s in self.predict_scores(matrix)]


def train_logistic(matrix, ridge=1e-8):
    return LogisticModel(ridge=ridge).fit(matrix)


# ---------------------------------------------------------------------------
# linear SVM

def _fit_platt(margins, y01, max_iter=200):
    """Sigmoid calibration of margins with the usual smoothed targets."""
    n_pos = int(y01.sum())
    n_neg = len(y01) - n_pos
    t_pos = (n_pos + 1.0) / (n_pos + 2.0)
    t_neg = 1.0 / (n_neg + 2.0)
    target = np.where(y01 == 1, t_pos, t_neg)

    a, c = 1.0, 0.0
    step = 1.0

    def loss(a_, c_):
        logits = a_ * margins + c_
        return float(np.sum(np.logaddexp(0.0, logits) - target * logits))

    current = loss(a, c)
    for _ in range(max_iter):
        p = _sigmoid(a * margins + c)
        grad_a = float(np.sum((p - target) * margins))
        grad_c = float(np.sum(p - target))
        norm = math.hypot(grad_a, grad_c)
        if norm < 1e-8:
            break
        step = min(step * 2.0, 1e4)
        while step > 1e-12:
            a_new = a - step / len(margins) * grad_a
            c_new = c - step / len(margins) * grad_c
            new = loss(a_new, c_new)
            if new <= current:
                break
            step /= 2.0
        a, c, current = a_new, c_new, new
    return a, c


class LinearSVM:
    """Linear hinge-loss SVM by deterministic epoch-ordered subgradient
    steps, with a sigmoid fit on training margins for [0, 1] scores."""

    kind = ModelKind.LINEAR_SVM

    def __init__(self, C=1.0, epochs=100):
        self.C = C
        self.epochs = epochs
        self.schema = None
        self.scaler = None
        self.weights = None
        self.intercept = None
        self.platt = None

    def fit(self, matrix):
        y01 = matrix.label_array()
        check_two_classes(y01)
        self.schema = matrix.schema()
        self.scaler = Standardizer().fit(matrix)
        z = self.scaler.transform(matrix)
        n, d = z.shape
        y = np.where(y01 == 1, 1.0, -1.0)
        lam = 1.0 / (self.C * n)
        w = np.zeros(d)
        b = 0.0
        t = 0
        for _ in range(self.epochs):
            for i in range(n):  # fixed row order keeps training deterministic
                t += 1
                eta = 1.0 / (lam * t)
                margin = y[i] * (z[i] @ w + b)
                w *= 1.0 - eta * lam
                if margin < 1.0:
                    w += eta * y[i] * z[i]
                    b += eta * y[i]
        self.weights = w
        self.intercept = b
        self.platt = _fit_platt(z @ w + b, y01)
        return self

    def margins(self, matrix):
        check_schema(self.schema, matrix)
        z = self.scaler.transform(matrix)
        return z @ self.weights + self.intercept

    def predict_scores(self, matrix):
        if self.weights is None:
            raise LearnerError("model is not fitted")
        a, c = self.platt
        return _sigmoid(a * self.margins(matrix) + c)

    def predict(self, matrix):
        return [score_to_label(s) for s in self.predict_scores(matrix)]


def train_svm(matrix, C=1.0, epochs=100):
    return LinearSVM(C=C, epochs=epochs).fit(matrix)


# ---------------------------------------------------------------------------
# multilayer perceptron

def mlp_init(d, hidden, seed):
    rng = np.random.default_rng(seed)
    s1 = 1.0 / math.sqrt(max(d, 1))
    s2 = 1.0 / math.sqrt(hidden)
    return np.concatenate(
        [
            rng.uniform(-s1, s1, size=d * hidden),
            np.zeros(hidden),
            rng.uniform(-s2, s2, size=hidden),
            np.zeros(1),
        ]
    )


def mlp_unpack(flat, d, hidden):
    i = 0
    w1 = flat[i : i + d * hidden].reshape(d, hidden)
    i += d * hidden
    b1 = flat[i : i + hidden]
    i += hidden
    w2 = flat[i : i + hidden]
    i += hidden
    b2 = flat[i]
    return w1, b1, w2, b2


def mlp_loss_and_grad(flat, z, y, hidden):
    """Mean log-loss of the 1-hidden-layer sigmoid net and its gradient.

    Kept as a standalone function so the backpropagated gradient can be
    checked against finite differences.
    """
    n, d = z.shape
    w1, b1, w2, b2 = mlp_unpack(flat, d, hidden)
    a1 = _sigmoid(z @ w1 + b1)
    logits = a1 @ w2 + b2
    p = _sigmoid(logits)
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))

    delta_out = (p - y) / n  # d loss / d logits
    grad_w2 = a1.T @ delta_out
    grad_b2 = float(delta_out.sum())
    delta_hidden = np.outer(delta_out, w2) * a1 * (1.0 - a1)
    grad_w1 = z.T @ delta_hidden
    grad_b1 = delta_hidden.sum(axis=0)
    grad = np.concatenate(
        [grad_w1.ravel(), grad_b1, grad_w2, np.array([grad_b2])]
    )
    return loss, grad


class SigmoidMLP:
    """One sigmoid hidden layer trained by full-batch gradient descent."""

    kind = ModelKind.MLP

    def __init__(self, hidden=16, epochs=200, lr=0.01, seed=0):
        if hidden < 1:
            raise LearnerError(f"hidden must be >= 1, got {hidden}")
        self.hidden = hidden
        self.epochs = epochs
        self.lr = lr
        self.seed = seed
        self.schema = None
        self.scaler = None
        self.params = None

    def fit(self, matrix):
        y = matrix.label_array().astype(float)
        check_two_classes(matrix.label_array())
        self.schema = matrix.schema()
        self.scaler = Standardizer().fit(matrix)
        z = self.scaler.transform(matrix)
        flat = mlp_init(z.shape[1], self.hidden, self.seed)
        for _ in range(self.epochs):
            _, grad = mlp_loss_and_grad(flat, z, y, self.hidden)
            flat = flat - self.lr * grad
        self.params = flat
        return self

    def predict_scores(self, matrix):
        if self.params is None:
            raise LearnerError("model is not fitted")
        check_schema(self.schema, matrix)
        z = self.scaler.transform(matrix)
        w1, b1, w2, b2 = mlp_unpack(self.params, z.shape[1], self.hidden)
        a1 = _sigmoid(z @ w1 + b1)
        return _sigmoid(a1 @ w2 + b2)

    def predict(self, matrix):
        return [score_to_label(s) for s in self.predict_scores(matrix)]


def train_mlp(matrix, hidden=16, epochs=200, lr=0.01, seed=0):
    return SigmoidMLP(hidden=hidden, epochs=epochs, lr=lr, seed=seed).fit(matrix)
