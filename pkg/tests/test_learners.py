import numpy as np
import pytest

from aok.core import ColumnKind
from aok.learners.base import (
    LearnerError,
    Standardizer,
    check_two_classes,
    score_to_label,
)
from aok.learners.forest import (
    ForestConfig,
    RandomForest,
    train_forest,
    tree_distribution,
)
from aok.learners.models import (
    mlp_init,
    mlp_loss_and_grad,
    train_logistic,
    train_mlp,
    train_naive_bayes,
    train_svm,
)
from aok.learners.persist import load_model, save_model

from conftest import make_matrix
from oracles import c45_build, c45_distribution


def _separable(rng, n=60, d=4, shift=2.0):
    y = np.array([0] * (n // 2) + [1] * (n - n // 2))
    X = rng.normal(size=(n, d))
    X[y == 1] += shift
    return make_matrix(X, y), y


def test_forest_config_validation():
    with pytest.raises(LearnerError):
        ForestConfig(n_trees=0)
    with pytest.raises(LearnerError):
        ForestConfig(min_leaf=0.5)
    with pytest.raises(LearnerError):
        ForestConfig(features_per_split="half")
    assert ForestConfig(features_per_split=3).features_per_split == 3


def test_forest_learns_separable(rng):
    mat, y = _separable(rng)
    model = train_forest(mat, ForestConfig(n_trees=40))
    scores = model.predict_scores(mat)
    assert ((scores >= 0.5).astype(int) == y).mean() >= 0.95
    assert model.oob_accuracy is not None and model.oob_accuracy >= 0.9


def test_forest_deterministic_and_parallel_identical(rng):
    mat, _ = _separable(rng, n=50, d=5, shift=1.0)
    s1 = train_forest(mat, ForestConfig(n_trees=30, seed=9)).predict_scores(mat)
    s2 = train_forest(mat, ForestConfig(n_trees=30, seed=9)).predict_scores(mat)
    s4 = train_forest(
        mat, ForestConfig(n_trees=30, seed=9, n_jobs=4)
    ).predict_scores(mat)
    np.testing.assert_array_equal(s1, s2)
    np.testing.assert_array_equal(s1, s4)
    s_other = train_forest(mat, ForestConfig(n_trees=30, seed=10)).predict_scores(mat)
    assert not np.array_equal(s1, s_other)


def test_single_tree_matches_c45_oracle():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(6, 25))
        d = int(rng.integers(1, 5))
        X = np.round(rng.normal(size=(n, d)), 2)
        y = rng.integers(0, 2, size=n)
        if len(set(y)) < 2:
            y[0] = 1 - y[0]
        mat = make_matrix(X, y)
        model = RandomForest(
            ForestConfig(n_trees=1, features_per_split="all", bootstrap=False)
        ).fit(mat)
        oracle = c45_build(X, y)
        kinds = [ColumnKind.NUMERIC] * d
        no_miss = np.zeros(d, dtype=bool)
        probes = np.vstack([X, np.round(rng.normal(size=(20, d)), 2)])
        for x in probes:
            got = tree_distribution(model.trees[0], x, no_miss, kinds)
            want = c45_distribution(oracle, x)
            np.testing.assert_allclose(got, want, atol=1e-12)


def test_forest_monotone_transform_invariance():
    rng = np.random.default_rng(21)
    transforms = (np.exp, np.arcsinh, lambda v: v ** 3 + 2 * v)
    for trial in range(6):
        n = int(rng.integers(20, 40))
        d = int(rng.integers(2, 5))
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 2, size=n)
        if len(set(y)) < 2:
            y[0] = 1 - y[0]
        cfg = ForestConfig(n_trees=10, bootstrap=False, seed=3)
        base = train_forest(make_matrix(X, y), cfg).predict_scores(make_matrix(X, y))
        warped = X.copy()
        for j in range(d):
            warped[:, j] = transforms[j % len(transforms)](X[:, j])
        wm = make_matrix(warped, y)
        warped_scores = train_forest(wm, cfg).predict_scores(wm)
        np.testing.assert_array_equal(base, warped_scores)


def test_forest_missing_rows_blend():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    mat = make_matrix(X, y)
    model = RandomForest(
        ForestConfig(n_trees=1, features_per_split="all", bootstrap=False)
    ).fit(mat)
    probe = make_matrix(
        np.array([[1.5]]), [0], missing=np.array([[True]])
    )
    dist = tree_distribution(
        model.trees[0], probe.values[0], probe.missing[0], [ColumnKind.NUMERIC]
    )
    np.testing.assert_allclose(dist, [0.5, 0.5], atol=1e-12)


def test_forest_categorical_unseen_category():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([0, 0, 1, 1])
    mat = make_matrix(X, y, kinds=[ColumnKind.CATEGORICAL])
    model = RandomForest(
        ForestConfig(n_trees=1, features_per_split="all", bootstrap=False)
    ).fit(mat)
    dist = tree_distribution(
        model.trees[0], np.array([7.0]), np.array([False]),
        [ColumnKind.CATEGORICAL],
    )
    np.testing.assert_allclose(dist, [0.5, 0.5], atol=1e-12)


def test_forest_rejects_single_class():
    mat = make_matrix(np.zeros((4, 2)), [1, 1, 1, 1])
    with pytest.raises(LearnerError):
        train_forest(mat, ForestConfig(n_trees=2))


def test_forest_schema_mismatch_rejected(rng):
    mat, _ = _separable(rng, n=20, d=3)
    model = train_forest(mat, ForestConfig(n_trees=5))
    other = make_matrix(np.zeros((2, 2)), [0, 1])
    with pytest.raises(LearnerError):
        model.predict_scores(other)


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(12, 3))
    y = rng.integers(0, 2, size=12).astype(float)
    flat = mlp_init(3, 5, seed=1)
    _, grad = mlp_loss_and_grad(flat, z, y, 5)
    eps = 1e-6
    fd = np.zeros_like(flat)
    for i in range(len(flat)):
        up = flat.copy()
        up[i] += eps
        dn = flat.copy()
        dn[i] -= eps
        fd[i] = (
            mlp_loss_and_grad(up, z, y, 5)[0] - mlp_loss_and_grad(dn, z, y, 5)[0]
        ) / (2 * eps)
    rel = np.abs(fd - grad) / np.maximum(1e-8, np.abs(fd) + np.abs(grad))
    assert rel.max() < 1e-4


def test_linear_models_learn_separable(rng):
    mat, y = _separable(rng)
    for train in (train_logistic, train_naive_bayes, train_svm):
        scores = train(mat).predict_scores(mat)
        assert ((scores >= 0.5).astype(int) == y).mean() >= 0.9
        assert scores.min() >= 0.0 and scores.max() <= 1.0


def test_mlp_learns_separable(rng):
    mat, y = _separable(rng, n=80, d=3, shift=3.0)
    model = train_mlp(mat, hidden=8, epochs=400, lr=0.1, seed=0)
    scores = model.predict_scores(mat)
    assert ((scores >= 0.5).astype(int) == y).mean() >= 0.9


def test_models_deterministic(rng):
    mat, _ = _separable(rng, n=40)
    for train in (train_logistic, train_naive_bayes, train_svm):
        np.testing.assert_array_equal(
            train(mat).predict_scores(mat), train(mat).predict_scores(mat)
        )
    np.testing.assert_array_equal(
        train_mlp(mat, epochs=30, seed=4).predict_scores(mat),
        train_mlp(mat, epochs=30, seed=4).predict_scores(mat),
    )


def test_persist_round_trip_all_kinds(tmp_path, rng):
    mat, _ = _separable(rng, n=30)
    models = [
        train_forest(mat, ForestConfig(n_trees=8)),
        train_logistic(mat),
        train_naive_bayes(mat),
        train_svm(mat),
        train_mlp(mat, epochs=20),
    ]
    for i, model in enumerate(models):
        path = tmp_path / f"m{i}.json"
        save_model(model, path)
        back = load_model(path)
        np.testing.assert_allclose(
            back.predict_scores(mat), model.predict_scores(mat), atol=1e-12
        )


def test_score_to_label_threshold():
    assert score_to_label(0.5).value == "Complete Occlusion"
    assert score_to_label(0.49).value == "Partial Occlusion"


def test_check_two_classes():
    with pytest.raises(LearnerError):
        check_two_classes(np.array([1, 1, 1]))
    check_two_classes(np.array([0, 1]))


def test_standardizer_imputes_and_centers(rng):
    X = rng.normal(loc=5.0, scale=3.0, size=(30, 2))
    miss = rng.random((30, 2)) < 0.2
    mat = make_matrix(X, [0, 1] * 15, missing=miss)
    std = Standardizer().fit(mat)
    z = std.transform(mat)
    assert np.isfinite(z).all()
    assert np.abs(z.mean(axis=0)).max() < 1e-9
    assert np.abs(z.std(axis=0) - 1.0).max() < 1e-6
    fill_rows = np.where(miss[:, 0])[0]
    if len(fill_rows):
        expect = (X[~miss[:, 0], 0].mean() - std.mean[0]) / std.std[0]
        assert z[fill_rows[0], 0] == pytest.approx(expect)
