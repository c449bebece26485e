import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aok.core import (
    ClinicalRecord,
    ColumnKind,
    ConditionVocabulary,
    OcclusionLabel,
)
from aok.evaluation import CVConfig
from aok.learners.forest import ForestConfig
from aok.selection import (
    DIFF_THRESHOLD,
    IG_THRESHOLD,
    RATIO_THRESHOLD,
    greedy_forward,
    information_gain,
    prevalence_select,
    rank_features,
    selection_report,
)

from conftest import make_matrix
from oracles import brute_ig_categorical, brute_ig_numeric

CO = OcclusionLabel.COMPLETE_OCCLUSION
PO = OcclusionLabel.PARTIAL_OCCLUSION


def _worked_cohort():
    cohort = []
    for i in range(49):
        conds = set()
        if i < 28:
            conds.update(("Hypertension", "Migraines"))
        cohort.append(
            (ClinicalRecord(case_id=f"A{i:03d}", conditions=frozenset(conds)), CO)
        )
    for i in range(32):
        conds = set()
        if i < 19:
            conds.add("Hypertension")
        if i < 14:
            conds.add("Migraines")
        cohort.append(
            (ClinicalRecord(case_id=f"B{i:03d}", conditions=frozenset(conds)), PO)
        )
    return cohort


def test_default_thresholds():
    assert RATIO_THRESHOLD == pytest.approx(0.30)
    assert DIFF_THRESHOLD == pytest.approx(0.10)
    assert IG_THRESHOLD == pytest.approx(0.15)


def test_prevalence_worked_example():
    rep = prevalence_select(_worked_cohort(), ConditionVocabulary.default())
    by_name = {e.condition: e for e in rep.entries}
    hyp = by_name["Hypertension"]
    mig = by_name["Migraines"]
    assert hyp.ratio_co == pytest.approx(28 / 49)
    assert hyp.ratio_po == pytest.approx(19 / 32)
    assert hyp.abs_diff == pytest.approx(abs(28 / 49 - 19 / 32))
    assert hyp.kept_stage1 and not hyp.kept_stage2
    assert mig.ratio_co == pytest.approx(28 / 49)
    assert mig.ratio_po == pytest.approx(14 / 32)
    assert mig.abs_diff == pytest.approx(abs(28 / 49 - 14 / 32))
    assert mig.kept_stage1 and mig.kept_stage2
    assert rep.selected() == ("Migraines",)


def test_prevalence_stage1_floor():
    cohort = _worked_cohort()
    rep = prevalence_select(cohort, ConditionVocabulary.default())
    absent = [e for e in rep.entries if e.condition == "Gout"]
    assert absent and not absent[0].kept_stage1


def test_information_gain_perfect_and_flat():
    miss = np.zeros(4, dtype=bool)
    assert information_gain(
        np.array([1.0, 2.0, 3.0, 4.0]), miss, np.array([0, 0, 1, 1])
    ) == pytest.approx(1.0)
    assert information_gain(
        np.array([1.0, 1.0, 1.0, 1.0]), miss, np.array([0, 0, 1, 1])
    ) == pytest.approx(0.0)


def test_information_gain_missing_scaling():
    vals = np.array([1.0, 2.0, 3.0, 4.0, 0.0, 0.0])
    miss = np.array([False, False, False, False, True, True])
    labels = np.array([0, 0, 1, 1, 0, 1])
    got = information_gain(vals, miss, labels)
    assert got == pytest.approx(brute_ig_numeric(vals, miss, labels), abs=1e-12)
    assert got == pytest.approx(4 / 6 * 1.0)


def test_information_gain_matches_brute_force(rng):
    for trial in range(60):
        n = int(rng.integers(2, 13))
        labels = rng.integers(0, 2, size=n)
        if rng.random() < 0.5:
            vals = rng.integers(0, 4, size=n).astype(float)
        else:
            vals = np.round(rng.normal(size=n), 2)
        miss = rng.random(n) < 0.2
        kind = ColumnKind.NUMERIC if trial % 2 == 0 else ColumnKind.CATEGORICAL
        got = information_gain(vals, miss, labels, kind=kind)
        oracle = (
            brute_ig_numeric(vals, miss, labels)
            if kind is ColumnKind.NUMERIC
            else brute_ig_categorical(vals, miss, labels)
        )
        assert got == pytest.approx(oracle, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_information_gain_invariances(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 16))
    vals = rng.normal(size=n)
    miss = rng.random(n) < 0.15
    labels = rng.integers(0, 2, size=n)
    base = information_gain(vals, miss, labels)
    perm = rng.permutation(n)
    assert information_gain(vals[perm], miss[perm], labels[perm]) == pytest.approx(
        base, abs=1e-12
    )
    warped = np.exp(vals)  # strictly increasing, order preserved
    assert information_gain(warped, miss, labels) == pytest.approx(base, abs=1e-12)


def test_rank_features_orders_by_gain():
    rng = np.random.default_rng(2)
    y = np.array([0] * 20 + [1] * 20)
    strong = y + rng.normal(0, 0.05, 40)
    weak = y + rng.normal(0, 2.0, 40)
    noise = rng.normal(0, 1.0, 40)
    mat = make_matrix(
        np.stack([noise, strong, weak], axis=1), y,
        names=["noise", "strong", "weak"],
    )
    kept, ranking = rank_features(mat, threshold=0.15)
    assert ranking[0][0] == "strong"
    assert kept[0] == "strong"
    assert "noise" not in kept
    gains = [g for _, g in ranking]
    assert gains == sorted(gains, reverse=True)


def test_rank_features_tie_break_by_name():
    y = np.array([0, 0, 1, 1])
    col = np.array([1.0, 2.0, 3.0, 4.0])
    mat = make_matrix(np.stack([col, col], axis=1), y, names=["b", "a"])
    _, ranking = rank_features(mat, threshold=0.0)
    assert [n for n, _ in ranking] == ["a", "b"]


def test_greedy_forward_picks_informative():
    rng = np.random.default_rng(4)
    y = np.array([0] * 30 + [1] * 30)
    strong = y * 2.0 + rng.normal(0, 0.2, 60)
    noise1 = rng.normal(size=60)
    noise2 = rng.normal(size=60)
    mat = make_matrix(
        np.stack([noise1, strong, noise2], axis=1), y,
        names=["n1", "strong", "n2"],
    )
    cv = CVConfig(k=5, seed=0)
    final, trace = greedy_forward(
        mat, base=[], candidates=["n1", "strong", "n2"], cv=cv,
        forest_config=ForestConfig(n_trees=15),
    )
    assert "strong" in final
    assert trace[0]["iteration"] == 0
    accepted = [t for t in trace if t.get("accepted")]
    assert any(t["candidate"] == "strong" for t in accepted if t["candidate"])


def test_selection_report_shape():
    rep = prevalence_select(_worked_cohort(), ConditionVocabulary.default())
    doc = selection_report(prevalence=rep, ranking=[("age", 0.2)], kept=["age"])
    assert "prevalence" in doc and "ranking" in doc and "kept" in doc
    assert doc["kept"] == ["age"]
