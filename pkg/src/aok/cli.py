"""Batch command-line surface: aok <command> --config run.json.

Commands are idempotent, write only under --out, and produce
byte-identical JSON on re-runs with the same config and seeds (text
reports embed a timestamp only behind --timestamps).  Exit codes:
0 success, 2 validation failure (bad config, missing or malformed
inputs), 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from aok.core import (
    ConditionVocabulary,
    CoreError,
    FeatureSetId,
    OcclusionLabel,
    Provenance,
    validate_record,
)
from aok.evaluation import (
    CVConfig,
    EvaluationError,
    cross_validate,
    dice,
    dice_summary,
    paired_ttest,
    report,
    report_json,
)
from aok.features import (
    FeatureError,
    IMAGING_2D_COLUMNS,
    IMAGING_3D_COLUMNS,
    build_matrix,
    derive_features,
)
from aok.geometry import GeometryError
from aok.io import (
    IoError,
    read_annotation,
    read_cohort,
    read_manifest,
    read_mask_2d,
    read_mask_3d,
    write_annotation,
    write_cohort,
)
from aok.learners import (
    ForestConfig,
    GaussianNaiveBayes,
    LearnerError,
    LinearSVM,
    LogisticModel,
    RandomForest,
    SigmoidMLP,
)
from aok.selection import (
    SelectionError,
    prevalence_select,
    rank_features,
    selection_report,
)
from aok.synthgen import (
    CohortSpec,
    SynthError,
    default_cohort_spec,
    gen_cohort,
    gen_seg_corpus_2d,
    gen_seg_corpus_3d,
)

_VALIDATION_ERRORS = (
    IoError,
    CoreError,
    FeatureError,
    GeometryError,
    SelectionError,
    LearnerError,
    EvaluationError,
    SynthError,
    FileNotFoundError,
)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# run config

@dataclass(frozen=True)
class RunConfig:
    cohort_path: str
    annotations_dir: str | None
    masks_dir: str | None
    device_catalog: str | None
    ratio_threshold: float
    diff_threshold: float
    ig_threshold: float
    cv: CVConfig
    learner: str
    learner_params: dict
    sets: tuple


def load_run_config(path):
    """Parse and validate a run config, resolving paths against its dir."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    base = os.path.dirname(os.path.abspath(path))

    def resolve(key, required):
        raw = doc.get("paths", {}).get(key)
        if raw is None:
            if required:
                raise ConfigError(f"{path}: paths.{key} is required")
            return None
        full = raw if os.path.isabs(raw) else os.path.join(base, raw)
        if not os.path.exists(full):
            raise ConfigError(f"{path}: paths.{key} does not exist: {full}")
        return full

    sel = doc.get("selection", {})
    cv_doc = doc.get("cv", {})
    try:
        cv = CVConfig(
            k=int(cv_doc.get("k", 10)),
            seed=int(cv_doc.get("seed", 0)),
            repetitions=int(cv_doc.get("repetitions", 1)),
            stratified=bool(cv_doc.get("stratified", True)),
        )
    except EvaluationError as exc:
        raise ConfigError(f"{path}: cv: {exc}") from None
    learner = doc.get("learner", "forest")
    if learner not in ("forest", "naive_bayes", "logistic", "svm", "mlp"):
        raise ConfigError(f"{path}: unknown learner {learner!r}")
    sets = tuple(doc.get("sets", ["A", "B", "C", "D", "F"]))
    for s in sets:
        try:
            FeatureSetId(s)
        except ValueError:
            raise ConfigError(f"{path}: sets: unknown feature set {s!r}") from None
    return RunConfig(
        cohort_path=resolve("cohort", required=True),
        annotations_dir=resolve("annotations", required=False),
        masks_dir=resolve("masks", required=False),
        device_catalog=resolve("device_catalog", required=False),
        ratio_threshold=float(sel.get("ratio_threshold", 0.30)),
        diff_threshold=float(sel.get("diff_threshold", 0.10)),
        ig_threshold=float(sel.get("ig_threshold", 0.15)),
        cv=cv,
        learner=learner,
        learner_params=dict(doc.get(learner, {})),
        sets=sets,
    )


def _with_seed(cfg, seed):
    if seed is None:
        return cfg
    cv = CVConfig(
        k=cfg.cv.k,
        seed=int(seed),
        repetitions=cfg.cv.repetitions,
        stratified=cfg.cv.stratified,
    )
    return RunConfig(
        cohort_path=cfg.cohort_path,
        annotations_dir=cfg.annotations_dir,
        masks_dir=cfg.masks_dir,
        device_catalog=cfg.device_catalog,
        ratio_threshold=cfg.ratio_threshold,
        diff_threshold=cfg.diff_threshold,
        ig_threshold=cfg.ig_threshold,
        cv=cv,
        learner=cfg.learner,
        learner_params=cfg.learner_params,
        sets=cfg.sets,
    )


def make_learner(kind, params):
    """A seed -> unfitted-model factory for the configured learner."""
    if kind == "forest":
        base = ForestConfig(
            n_trees=int(params.get("n_trees", 100)),
            features_per_split=params.get("features_per_split", "sqrt"),
            min_leaf=float(params.get("min_leaf", 1.0)),
            max_depth=params.get("max_depth"),
            bootstrap=bool(params.get("bootstrap", True)),
            n_jobs=int(params.get("n_jobs", 1)),
        )
        return lambda seed: RandomForest(base.with_seed(seed))
    if kind == "naive_bayes":
        return lambda seed: GaussianNaiveBayes()
    if kind == "logistic":
        return lambda seed: LogisticModel(
            ridge=float(params.get("ridge", 1e-8)),
            max_iter=int(params.get("max_iter", 500)),
        )
    if kind == "svm":
        return lambda seed: LinearSVM(
            C=float(params.get("C", 1.0)), epochs=int(params.get("epochs", 100))
        )
    return lambda seed: SigmoidMLP(
        hidden=int(params.get("hidden", 16)),
        epochs=int(params.get("epochs", 200)),
        lr=float(params.get("lr", 0.01)),
        seed=int(params.get("seed", 0)),
    )


# ---------------------------------------------------------------------------
# shared loading

def _load_cohort(cfg):
    return read_cohort(cfg.cohort_path)


def _load_bundles(cfg, cohort):
    if cfg.annotations_dir is None:
        raise ConfigError("paths.annotations is required for this command")
    bundles = {}
    for rec, _ in cohort:
        p = os.path.join(cfg.annotations_dir, f"{rec.case_id}.json")
        if not os.path.exists(p):
            raise ConfigError(
                f"paths.annotations: no annotation for case {rec.case_id!r} at {p}"
            )
        bundles[rec.case_id] = read_annotation(p)
    return bundles


def _load_auto_masks(cfg, cohort):
    """Optional per-case automatic masks: {case_id}.raw 3D volumes."""
    if cfg.masks_dir is None:
        return {}
    masks = {}
    for rec, _ in cohort:
        p = os.path.join(cfg.masks_dir, f"{rec.case_id}.raw")
        if os.path.exists(p):
            masks[rec.case_id] = read_mask_3d(p)
    return masks


def _derive_all(cfg, cohort, bundles):
    auto = _load_auto_masks(cfg, cohort)
    out = {}
    for rec, _ in cohort:
        out[rec.case_id] = derive_features(
            bundles[rec.case_id], auto_mask_3d=auto.get(rec.case_id)
        )
    return out


def _selection_outputs(cfg, cohort, derived, vocab):
    """Prevalence screen plus information-gain ranking on the set-A matrix."""
    prev = prevalence_select(
        cohort,
        vocab=vocab,
        ratio_threshold=cfg.ratio_threshold,
        diff_threshold=cfg.diff_threshold,
    )
    matrix, _ = build_matrix(cohort, derived, FeatureSetId.A, vocab=vocab)
    keep_cols = []
    for col in matrix.columns:
        if col.name.startswith("condition="):
            if col.name.split("=", 1)[1] not in prev.selected():
                continue
        keep_cols.append(col.name)
    gated = matrix.select_columns(keep_cols)
    kept, ranking = rank_features(gated, threshold=cfg.ig_threshold)
    col_of = {c.name: c for c in gated.columns}
    sel_clin = [n for n in kept if col_of[n].provenance is Provenance.CLINICAL]
    # conditions earn their place through the prevalence screen, not the
    # information-gain gate
    for cond in prev.selected():
        name = f"condition={cond}"
        if name in col_of and name not in sel_clin:
            sel_clin.append(name)
    sel_img = [n for n in kept if n in IMAGING_2D_COLUMNS]
    return prev, ranking, kept, sel_clin, sel_img


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _stamp(doc, args):
    if getattr(args, "timestamps", False):
        doc["generated_at"] = datetime.now(timezone.utc).isoformat()
    return doc


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(args):
    cfg = load_run_config(args.config)
    cohort = _load_cohort(cfg)
    vocab = ConditionVocabulary.default()
    n_co = sum(1 for _, lab in cohort if lab is OcclusionLabel.COMPLETE_OCCLUSION)
    violations = {}
    for rec, _ in cohort:
        v = validate_record(rec, vocab)
        if v:
            violations[rec.case_id] = v

    fields = (
        "age", "gender", "height_cm", "weight_kg", "race", "aneurysm_location",
        "side", "rupture_status", "detection", "hunt_hess", "nihss", "mrs",
        "smoking_history", "substance_abuse",
    )
    missing = {
        f: sum(1 for rec, _ in cohort if getattr(rec, f) is None) / len(cohort)
        for f in fields
    }
    annotations = None
    if cfg.annotations_dir is not None:
        present = sum(
            1
            for rec, _ in cohort
            if os.path.exists(os.path.join(cfg.annotations_dir, f"{rec.case_id}.json"))
        )
        annotations = {"present": present, "total": len(cohort)}

    doc = {
        "n_cases": len(cohort),
        "n_complete_occlusion": n_co,
        "n_partial_occlusion": len(cohort) - n_co,
        "missing_fraction": missing,
        "violations": violations,
    }
    if annotations is not None:
        doc["annotations"] = annotations
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "ingest.json")
    _write_json(out_path, _stamp(doc, args))
    print(f"{len(cohort)} cases ({n_co} CO / {len(cohort) - n_co} PO) -> {out_path}")
    return 0


_GEOM_FIELDS = (
    "height_ap_mm", "width_ap_mm", "dome_ap_mm", "neck_ap_mm", "sum3_ap_mm",
    "height_lat_mm", "width_lat_mm", "dome_lat_mm", "neck_lat_mm", "sum3_lat_mm",
    "agg_height_mm", "agg_width_mm", "agg_dome_mm", "agg_neck_mm", "agg_sum3_mm",
    "area_ap_mm2", "area_lat_mm2", "agg_area_mm2",
    "parent_diam_mm", "left_diam_mm", "right_diam_mm",
    "ratio_left_parent", "ratio_right_parent", "ratio_larger_parent",
    "ratio_left_right", "left_angle_deg", "right_angle_deg",
    "norm_left_angle", "norm_right_angle",
)
_SHAPE_FIELDS = ("volume_cm3", "surface_cm2", "nsi", "ipr")


def cmd_geom(args):
    cfg = load_run_config(args.config)
    cohort = _load_cohort(cfg)
    bundles = _load_bundles(cfg, cohort)
    derived = _derive_all(cfg, cohort, bundles)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "geometry.csv")
    header = ["case_id"] + list(_GEOM_FIELDS) + list(_SHAPE_FIELDS) + [
        f"auto_{n}" for n in _SHAPE_FIELDS
    ]
    lines = [",".join(header)]
    for rec, _ in sorted(cohort, key=lambda p: p[0].case_id):
        d = derived[rec.case_id]

        def fmt(v):
            return "" if v is None else repr(float(v))

        row = [rec.case_id]
        row += [fmt(getattr(d, f)) for f in _GEOM_FIELDS]
        for shape_attr in ("manual_shape", "auto_shape"):
            shape = getattr(d, shape_attr)
            row += [
                fmt(getattr(shape, f) if shape is not None else None)
                for f in _SHAPE_FIELDS
            ]
        lines.append(",".join(row))
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"geometry for {len(cohort)} cases -> {out_path}")
    return 0


def cmd_select(args):
    cfg = _with_seed(load_run_config(args.config), args.seed)
    cohort = _load_cohort(cfg)
    bundles = _load_bundles(cfg, cohort)
    derived = _derive_all(cfg, cohort, bundles)
    vocab = ConditionVocabulary.default()
    prev, ranking, kept, sel_clin, sel_img = _selection_outputs(
        cfg, cohort, derived, vocab
    )
    doc = selection_report(prevalence=prev, ranking=ranking, kept=kept)
    doc["selected_clinical"] = sel_clin
    doc["selected_imaging"] = sel_img
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "selection.json")
    _write_json(out_path, _stamp(doc, args))
    print(
        f"{len(prev.selected())} conditions, {len(kept)} ranked features kept "
        f"-> {out_path}"
    )
    return 0


def cmd_eval(args):
    cfg = _with_seed(load_run_config(args.config), args.seed)
    sets = cfg.sets
    if args.sets:
        sets = tuple(s.strip() for s in args.sets.split(",") if s.strip())
        for s in sets:
            try:
                FeatureSetId(s)
            except ValueError:
                raise ConfigError(f"--sets: unknown feature set {s!r}") from None
    cohort = _load_cohort(cfg)
    bundles = _load_bundles(cfg, cohort)
    derived = _derive_all(cfg, cohort, bundles)
    vocab = ConditionVocabulary.default()
    _, _, _, sel_clin, sel_img = _selection_outputs(cfg, cohort, derived, vocab)
    factory = make_learner(cfg.learner, cfg.learner_params)

    blocks = {}
    rep_f1 = {}
    for s in sets:
        set_id = FeatureSetId(s)
        matrix, _ = build_matrix(
            cohort,
            derived,
            set_id,
            selected_clinical=sel_clin,
            selected_imaging=sel_img,
            vocab=vocab,
        )
        if matrix.n_cols == 0:
            raise ConfigError(
                f"set {s}: no columns survived selection; "
                "lower selection.ig_threshold"
            )
        result = cross_validate(matrix, factory, cfg.cv)
        blocks[set_id] = result.pooled
        rep_f1[s] = result.rep_weighted_f1

    ttests = {}
    if cfg.cv.repetitions >= 2:
        for a in sets:
            for b in sets:
                if a < b:
                    t, p = paired_ttest(rep_f1[a], rep_f1[b])
                    ttests[f"{a} vs {b}"] = {"t": t, "p": p}

    os.makedirs(args.out, exist_ok=True)
    text = report(blocks)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        if getattr(args, "timestamps", False):
            fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        fh.write(text)
    doc = {"report": report_json(blocks), "rep_weighted_f1": rep_f1}
    if ttests:
        doc["paired_ttests"] = ttests
    _write_json(os.path.join(args.out, "report.json"), _stamp(doc, args))
    print(text, end="")
    print(f"-> {os.path.join(args.out, 'report.txt')}")
    return 0


def _read_any_mask(path):
    with open(path + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if "dims" in meta:
        return read_mask_3d(path)
    return read_mask_2d(path)


def cmd_dice(args):
    manifest = read_manifest(args.manifest)
    per_case = {}
    values = []
    for case in manifest.cases:
        if case.mask_pred is None:
            raise ConfigError(
                f"{args.manifest}: case {case.case_id!r} has no mask_pred"
            )
        gt = _read_any_mask(manifest.resolve(case.mask_gt))
        pred = _read_any_mask(manifest.resolve(case.mask_pred))
        d = dice(gt, pred)
        per_case[case.case_id] = d
        values.append(d)
    summary = dice_summary(values)
    doc = {
        "per_case": per_case,
        "mean": summary.mean,
        "ci_low": summary.ci_low,
        "ci_high": summary.ci_high,
        "n": len(values),
    }
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "dice.json")
    _write_json(out_path, _stamp(doc, args))
    print(
        f"mean Dice {summary.mean:.3f} "
        f"({summary.ci_low:.3f} - {summary.ci_high:.3f}) over {len(values)} cases "
        f"-> {out_path}"
    )
    return 0


def cmd_synth(args):
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = {}
    cohort_doc = doc.get("cohort")
    if cohort_doc is None:
        spec = default_cohort_spec()
    else:
        spec = CohortSpec(
            n_co=int(cohort_doc.get("n_co", 49)),
            n_po=int(cohort_doc.get("n_po", 32)),
            effect_sizes=dict(cohort_doc.get("effect_sizes", {})),
            missing_rate=float(cohort_doc.get("missing_rate", 0.0)),
            condition_prevalences={
                k: tuple(v)
                for k, v in cohort_doc.get("condition_prevalences", {}).items()
            },
            seed=int(cohort_doc.get("seed", 0)),
        )
    if args.seed is not None:
        spec = CohortSpec(
            n_co=spec.n_co,
            n_po=spec.n_po,
            effect_sizes=spec.effect_sizes,
            missing_rate=spec.missing_rate,
            condition_prevalences=spec.condition_prevalences,
            seed=int(args.seed),
        )

    out = args.out
    os.makedirs(os.path.join(out, "annotations"), exist_ok=True)
    generated = gen_cohort(spec)
    write_cohort(os.path.join(out, "cohort.csv"), list(generated.records))
    for case_id, bundle in sorted(generated.bundles.items()):
        write_annotation(
            os.path.join(out, "annotations", f"{case_id}.json"), bundle
        )
    _write_json(os.path.join(out, "effects.json"), dict(generated.effects))
    run = {
        "paths": {"cohort": "cohort.csv", "annotations": "annotations"},
        "selection": {
            "ratio_threshold": 0.30,
            "diff_threshold": 0.10,
            "ig_threshold": 0.15,
        },
        "cv": {"k": 10, "seed": spec.seed, "repetitions": 1, "stratified": True},
        "learner": "forest",
        "forest": {"n_trees": 100},
        "sets": ["A", "B", "C", "D", "F"],
    }
    _write_json(os.path.join(out, "run.json"), run)

    made = [f"{len(generated.records)} cases"]
    if doc.get("seg_corpus_2d") is not None:
        c = doc["seg_corpus_2d"]
        gen_seg_corpus_2d(
            os.path.join(out, "seg2d"),
            n_images=int(c.get("n_images", 60)),
            size=tuple(c.get("size", (128, 128))),
            seed=int(c.get("seed", spec.seed)),
        )
        made.append("seg2d corpus")
    if doc.get("seg_corpus_3d") is not None:
        c = doc["seg_corpus_3d"]
        gen_seg_corpus_3d(
            os.path.join(out, "seg3d"),
            n_volumes=int(c.get("n_volumes", 40)),
            size=tuple(c.get("size", (32, 48, 48))),
            seed=int(c.get("seed", spec.seed)),
        )
        made.append("seg3d corpus")
    print(f"{', '.join(made)} -> {out} (run config: {os.path.join(out, 'run.json')})")
    return 0


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    parser = argparse.ArgumentParser(
        prog="aok",
        description="Occlusion-outcome pipeline: ingest, geometry, selection, "
        "evaluation, and synthetic data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, config=True, manifest=False, spec=False):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", required=True, help="run config JSON")
        if manifest:
            p.add_argument("--manifest", required=True, help="segmentation manifest")
        if spec:
            p.add_argument("--spec", help="synthesis spec JSON (defaults used if absent)")
        p.add_argument("--out", default="aok_out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--timestamps",
            action="store_true",
            help="embed a generation timestamp in outputs",
        )
        p.set_defaults(fn=fn)
        return p

    add("ingest", cmd_ingest, "validate the cohort and summarize it")
    add("geom", cmd_geom, "per-case geometric measurements as CSV")
    add("select", cmd_select, "prevalence and information-gain selection report")
    p_eval = add("eval", cmd_eval, "cross-validated report over feature sets")
    p_eval.add_argument("--sets", help="comma-separated feature sets (overrides config)")
    add("dice", cmd_dice, "Dice scores for a prediction manifest", config=False,
        manifest=True)
    add("synth", cmd_synth, "generate a synthetic dataset", config=False, spec=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, *_VALIDATION_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal faults keep a distinct exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
