import math

import numpy as np
import pytest

from aok.core import (
    ConditionVocabulary,
    ContourStack3D,
    FeatureSetId,
    Mask2D,
    Mask3D,
    OcclusionLabel,
    View,
)
from aok.evaluation import CVConfig, cross_validate
from aok.features import build_matrix, derive_features
from aok.geometry import loft_mesh, mesh_metrics
from aok.io import read_manifest, read_mask_2d
from aok.learners.forest import ForestConfig, RandomForest
from aok.selection import prevalence_select
from aok.synthgen import (
    CohortSpec,
    ShapeForm,
    ShapeKind,
    SynthError,
    THOMSEN_P,
    default_cohort_spec,
    gen_cohort,
    gen_seg_corpus_2d,
    gen_shape,
)

CO = OcclusionLabel.COMPLETE_OCCLUSION
PO = OcclusionLabel.PARTIAL_OCCLUSION


def test_cohort_spec_validation():
    with pytest.raises(SynthError):
        CohortSpec(n_co=0, n_po=5)
    with pytest.raises(SynthError):
        CohortSpec(n_co=5, n_po=5, missing_rate=1.0)
    with pytest.raises(SynthError):
        CohortSpec(n_co=5, n_po=5, missing_rate=-0.1)
    with pytest.raises(SynthError):
        CohortSpec(
            n_co=5, n_po=5,
            condition_prevalences={"Hypertension": (1.4, 0.2)},
        )


def test_gen_cohort_counts_and_determinism():
    spec = default_cohort_spec(seed=0)
    gen = gen_cohort(spec)
    labels = [lab for _, lab in gen.records]
    assert labels.count(CO) == 49
    assert labels.count(PO) == 32
    assert len(gen.bundles) == 81
    case_ids = [rec.case_id for rec, _ in gen.records]
    assert case_ids[0] == "S0001"
    assert len(set(case_ids)) == 81

    again = gen_cohort(spec)
    assert [r for r, _ in again.records] == [r for r, _ in gen.records]
    b1 = gen.bundles["S0001"].contour_stack_3d.slices
    b2 = again.bundles["S0001"].contour_stack_3d.slices
    for (z1, c1), (z2, c2) in zip(b1, b2):
        assert z1 == z2
        np.testing.assert_array_equal(c1.points, c2.points)

    other = gen_cohort(default_cohort_spec(seed=1))
    assert [r for r, _ in other.records] != [r for r, _ in gen.records]


def test_gen_cohort_exact_condition_counts():
    gen = gen_cohort(default_cohort_spec(seed=0))
    hyp_co = sum(
        1 for rec, lab in gen.records
        if lab is CO and "Hypertension" in rec.conditions
    )
    hyp_po = sum(
        1 for rec, lab in gen.records
        if lab is PO and "Hypertension" in rec.conditions
    )
    mig_co = sum(
        1 for rec, lab in gen.records
        if lab is CO and "Migraines" in rec.conditions
    )
    mig_po = sum(
        1 for rec, lab in gen.records
        if lab is PO and "Migraines" in rec.conditions
    )
    assert (hyp_co, hyp_po) == (round(0.57 * 49), round(0.59 * 32))
    assert (mig_co, mig_po) == (round(0.57 * 49), round(0.44 * 32))


def test_gen_cohort_unknown_condition_rejected():
    spec = CohortSpec(
        n_co=5, n_po=5, condition_prevalences={"Dragon Pox": (0.5, 0.5)}
    )
    with pytest.raises(SynthError):
        gen_cohort(spec, vocab=ConditionVocabulary.default())


def test_missing_rate_zero_means_complete():
    gen = gen_cohort(
        CohortSpec(n_co=10, n_po=8, missing_rate=0.0, seed=2)
    )
    for rec, _ in gen.records:
        assert rec.age is not None
        assert rec.height_cm is not None
        assert rec.hunt_hess is not None
    for bundle in gen.bundles.values():
        for m in bundle.measurements.values():
            assert m.height_mm is not None
            assert m.width_mm is not None


def test_missing_rate_realized():
    gen = gen_cohort(
        CohortSpec(n_co=30, n_po=20, missing_rate=0.25, seed=3)
    )
    n_missing = sum(
        1 for rec, _ in gen.records
        for v in (rec.age, rec.height_cm, rec.weight_kg, rec.hunt_hess)
        if v is None
    )
    assert n_missing > 0


def test_prevalence_example_monte_carlo():
    vocab = ConditionVocabulary.default()
    wins = 0
    for seed in range(100):
        gen = gen_cohort(default_cohort_spec(seed=seed))
        rep = prevalence_select(list(gen.records), vocab)
        kept = rep.selected()
        if "Migraines" in kept and "Hypertension" not in kept:
            wins += 1
    assert wins >= 90


def test_planted_effect_direction():
    gen = gen_cohort(default_cohort_spec(seed=3))
    derived = {
        rec.case_id: derive_features(gen.bundles[rec.case_id])
        for rec, _ in gen.records
    }
    co_nsi = [
        derived[rec.case_id].manual_shape.nsi
        for rec, lab in gen.records if lab is CO
    ]
    po_nsi = [
        derived[rec.case_id].manual_shape.nsi
        for rec, lab in gen.records if lab is PO
    ]
    assert np.mean(co_nsi) < np.mean(po_nsi)
    co_v = [
        derived[rec.case_id].manual_shape.volume_cm3
        for rec, lab in gen.records if lab is CO
    ]
    po_v = [
        derived[rec.case_id].manual_shape.volume_cm3
        for rec, lab in gen.records if lab is PO
    ]
    assert np.mean(co_v) < np.mean(po_v)


def test_zero_effects_accuracy_near_majority():
    spec = CohortSpec(
        n_co=49, n_po=32, effect_sizes={}, missing_rate=0.0,
        condition_prevalences={}, seed=5,
    )
    gen = gen_cohort(spec)
    derived = {
        rec.case_id: derive_features(gen.bundles[rec.case_id])
        for rec, _ in gen.records
    }
    mat, _ = build_matrix(
        list(gen.records), derived, FeatureSetId.A,
        vocab=ConditionVocabulary.default(),
    )
    res = cross_validate(
        mat,
        lambda s: RandomForest(ForestConfig(n_trees=40, seed=s)),
        CVConfig(k=10, seed=0),
    )
    majority = 49 / 81
    band = 3.0 * math.sqrt(majority * (1 - majority) / 81)
    assert abs(res.pooled.metric("accuracy").point - majority) <= band


def test_sphere_examples():
    stack, truth = gen_shape(
        ShapeKind.SPHERE, {"r": 10.0}, ShapeForm.STACK, resolution=20 / 33
    )
    assert isinstance(stack, ContourStack3D)
    assert len(stack.slices) == 33
    assert truth.volume_mm3 == pytest.approx(4188.79, abs=0.01)
    assert truth.surface_mm2 == pytest.approx(4 * math.pi * 100.0)
    m = mesh_metrics(loft_mesh(stack))
    assert m.volume_cm3 * 1000 == pytest.approx(truth.volume_mm3, rel=0.02)

    mask, _ = gen_shape(ShapeKind.SPHERE, {"r": 10.0}, ShapeForm.MASK3D, 1.0)
    assert isinstance(mask, Mask3D)
    vox_v = mask.foreground_count * 1.0
    assert vox_v == pytest.approx(4188.79, rel=0.05)


def test_prism_voxel_example():
    mask, truth = gen_shape(
        ShapeKind.PRISM,
        {"lx": 10.0, "ly": 10.0, "lz": 10.0},
        ShapeForm.MASK3D,
        resolution=1.0,
    )
    assert mask.foreground_count == 1000
    assert truth.volume_mm3 == pytest.approx(1000.0)
    assert truth.surface_mm2 == pytest.approx(600.0)


def test_prism_stack_exact_loft():
    stack, _ = gen_shape(
        ShapeKind.PRISM,
        {"lx": 10.0, "ly": 10.0, "lz": 10.0},
        ShapeForm.STACK,
        resolution=1.0,
    )
    m = mesh_metrics(loft_mesh(stack))
    assert m.volume_cm3 == pytest.approx(1.0, rel=1e-9)
    assert m.surface_cm2 == pytest.approx(6.0, rel=1e-9)


def test_ellipsoid_examples():
    _, truth = gen_shape(
        ShapeKind.ELLIPSOID,
        {"a": 10.0, "b": 10.0, "c": 20.0},
        ShapeForm.STACK,
        resolution=1.0,
    )
    assert truth.volume_mm3 == pytest.approx(8377.58, abs=0.01)
    p = THOMSEN_P
    expect_s = (
        4 * math.pi
        * ((100.0 ** p + 2 * 200.0 ** p) / 3.0) ** (1.0 / p)
    )
    assert truth.surface_mm2 == pytest.approx(expect_s, rel=1e-9)


def test_blob_stack_matches_mask_volume():
    params = {"r": 8.0, "amplitude": 0.2, "seed": 4}
    stack, _ = gen_shape(ShapeKind.BLOB, params, ShapeForm.STACK, 0.5)
    mask, _ = gen_shape(ShapeKind.BLOB, params, ShapeForm.MASK3D, 0.5)
    loft_v = mesh_metrics(loft_mesh(stack)).volume_cm3
    vox_v = mask.foreground_count * 0.5 ** 3 / 1000.0
    assert loft_v == pytest.approx(vox_v, rel=0.10)


def test_mask2d_form():
    mask, _ = gen_shape(ShapeKind.SPHERE, {"r": 10.0}, ShapeForm.MASK2D, 1.0)
    assert isinstance(mask, Mask2D)
    assert mask.foreground_count == pytest.approx(math.pi * 100.0, rel=0.05)


def test_coarse_resolution_rejected():
    with pytest.raises(SynthError, match="too coarse"):
        gen_shape(ShapeKind.SPHERE, {"r": 10.0}, ShapeForm.STACK, 2.0)
    with pytest.raises(SynthError, match="too coarse"):
        gen_shape(
            ShapeKind.PRISM,
            {"lx": 10.0, "ly": 10.0, "lz": 10.0},
            ShapeForm.MASK3D,
            2.0,
        )


def test_pipeline_closure_random_radii():
    rng = np.random.default_rng(9)
    for r in rng.uniform(4.0, 15.0, 20):
        stack, truth = gen_shape(
            ShapeKind.SPHERE, {"r": float(r)}, ShapeForm.STACK, float(r) / 16.0
        )
        m = mesh_metrics(loft_mesh(stack))
        assert m.volume_cm3 * 1000 == pytest.approx(truth.volume_mm3, rel=0.02)
        assert m.surface_cm2 * 100 == pytest.approx(truth.surface_mm2, rel=0.03)


def test_seg_corpus_2d(tmp_path):
    out = tmp_path / "corpus"
    manifest_path = gen_seg_corpus_2d(out, n_images=12, k_folds=3, seed=0)
    manifest = read_manifest(manifest_path)
    assert len(manifest.cases) == 12
    assert manifest.splits() == ("fold0", "fold1", "fold2")
    for case in manifest.cases:
        img_path = manifest.resolve(case.image)
        mask = read_mask_2d(manifest.resolve(case.mask_gt))
        assert mask.voxels.shape == (128, 128)
        with open(img_path, "rb") as fh:
            assert fh.read(2) == b"P5"
    n_fg = [
        read_mask_2d(manifest.resolve(c.mask_gt)).foreground_count
        for c in manifest.cases
    ]
    assert min(n_fg) == 0 or sum(1 for v in n_fg if v == 0) >= 1
    assert max(n_fg) > 100
