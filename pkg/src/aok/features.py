"""Feature assembly: derived measurements and the A-G set builder.

Derived values never fabricate data: a cell is present only when its
inputs are, and the builder emits an audit map tracing every non-missing
cell back to a record field or a derivation formula.

Feature sets:
  A: every clinical feature plus all pre-operative 2D imaging features.
  B: a selected clinical subset (column names from the selection stage).
  C: B plus selected manually measured 2D imaging columns.
  D: C plus the four 3D sac measurements (volume, surface, NSI, IPR).
  E: D with the contour areas and volume/surface/IPR swapped to their
     automatically segmented versions; NSI stays manually sourced.
  F: the imaging-only columns of D.
  G: the imaging-only columns of E.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from aok.core import (
    AneurysmLocation,
    Column,
    ColumnKind,
    ConditionVocabulary,
    CoreError,
    Detection,
    FeatureMatrix,
    FeatureSetId,
    Gender,
    OcclusionLabel,
    Provenance,
    RuptureStatus,
    Side,
    Source,
    View,
)
from aok.geometry import (
    ShapeMetrics3D,
    loft_mesh,
    mask_area,
    mask_to_stack,
    mesh_metrics,
    polygon_area,
    vessel_angles,
    vessel_ratios,
)


class FeatureError(ValueError):
    """Feature assembly precondition violated."""


# ---------------------------------------------------------------------------
# elementary derivations

def aggregate(ap, lat):
    """Across-view aggregate: mean when both views exist, else the present one."""
    if ap is not None and lat is not None:
        return (ap + lat) / 2.0
    if ap is not None:
        return ap
    return lat


def sum3(m):
    """height + width + dome for one view; missing unless all three present."""
    if m is None:
        return None
    vals = (m.height_mm, m.width_mm, m.dome_mm)
    if any(v is None for v in vals):
        return None
    return float(sum(vals))


# ---------------------------------------------------------------------------
# per-case derived features

@dataclass(frozen=True)
class DerivedFeatures:
    """Everything computable for one case; every field optional (None)."""

    case_id: str
    height_ap_mm: float | None = None
    width_ap_mm: float | None = None
    dome_ap_mm: float | None = None
    neck_ap_mm: float | None = None
    height_lat_mm: float | None = None
    width_lat_mm: float | None = None
    dome_lat_mm: float | None = None
    neck_lat_mm: float | None = None
    sum3_ap_mm: float | None = None
    sum3_lat_mm: float | None = None
    agg_height_mm: float | None = None
    agg_width_mm: float | None = None
    agg_dome_mm: float | None = None
    agg_neck_mm: float | None = None
    agg_sum3_mm: float | None = None
    area_ap_mm2: float | None = None
    area_lat_mm2: float | None = None
    agg_area_mm2: float | None = None
    auto_area_ap_mm2: float | None = None
    auto_area_lat_mm2: float | None = None
    agg_auto_area_mm2: float | None = None
    parent_diam_mm: float | None = None
    left_diam_mm: float | None = None
    right_diam_mm: float | None = None
    ratio_left_parent: float | None = None
    ratio_right_parent: float | None = None
    ratio_larger_parent: float | None = None
    ratio_left_right: float | None = None
    left_angle_deg: float | None = None
    right_angle_deg: float | None = None
    norm_left_angle: float | None = None
    norm_right_angle: float | None = None
    manual_shape: ShapeMetrics3D | None = None
    auto_shape: ShapeMetrics3D | None = None

    def __post_init__(self):
        pairs = (
            ("agg_height_mm", "height_ap_mm", "height_lat_mm"),
            ("agg_width_mm", "width_ap_mm", "width_lat_mm"),
            ("agg_dome_mm", "dome_ap_mm", "dome_lat_mm"),
            ("agg_neck_mm", "neck_ap_mm", "neck_lat_mm"),
            ("agg_sum3_mm", "sum3_ap_mm", "sum3_lat_mm"),
            ("agg_area_mm2", "area_ap_mm2", "area_lat_mm2"),
            ("agg_auto_area_mm2", "auto_area_ap_mm2", "auto_area_lat_mm2"),
        )
        for agg_name, ap_name, lat_name in pairs:
            agg = getattr(self, agg_name)
            ap = getattr(self, ap_name)
            lat = getattr(self, lat_name)
            if (agg is None) != (ap is None and lat is None):
                raise FeatureError(
                    f"{agg_name} present iff at least one view value present"
                )
            if ap is not None and lat is not None:
                if not (min(ap, lat) - 1e-12 <= agg <= max(ap, lat) + 1e-12):
                    raise FeatureError(f"{agg_name} outside its view values")


def derive_features(bundle, auto_masks_2d=None, auto_mask_3d=None, ring_samples=64):
    """Compute DerivedFeatures for one annotated case.

    auto_masks_2d maps View -> Mask2D (automatic segmentations);
    auto_mask_3d is a Mask3D.  Anything not supplied stays missing.
    """
    auto_masks_2d = auto_masks_2d or {}
    m_ap = bundle.measurement(View.AP)
    m_lat = bundle.measurement(View.LATERAL)

    def dim(m, name):
        return getattr(m, name) if m is not None else None

    values = {
        "case_id": bundle.case_id,
        "height_ap_mm": dim(m_ap, "height_mm"),
        "width_ap_mm": dim(m_ap, "width_mm"),
        "dome_ap_mm": dim(m_ap, "dome_mm"),
        "neck_ap_mm": dim(m_ap, "neck_mm"),
        "height_lat_mm": dim(m_lat, "height_mm"),
        "width_lat_mm": dim(m_lat, "width_mm"),
        "dome_lat_mm": dim(m_lat, "dome_mm"),
        "neck_lat_mm": dim(m_lat, "neck_mm"),
        "sum3_ap_mm": sum3(m_ap),
        "sum3_lat_mm": sum3(m_lat),
    }
    values["agg_height_mm"] = aggregate(values["height_ap_mm"], values["height_lat_mm"])
    values["agg_width_mm"] = aggregate(values["width_ap_mm"], values["width_lat_mm"])
    values["agg_dome_mm"] = aggregate(values["dome_ap_mm"], values["dome_lat_mm"])
    values["agg_neck_mm"] = aggregate(values["neck_ap_mm"], values["neck_lat_mm"])
    values["agg_sum3_mm"] = aggregate(values["sum3_ap_mm"], values["sum3_lat_mm"])

    areas = {}
    for view, key in ((View.AP, "area_ap_mm2"), (View.LATERAL, "area_lat_mm2")):
        entry = bundle.contour_2d(view)
        areas[key] = (
            polygon_area(entry[0], entry[1]) if entry is not None else None
        )
    values.update(areas)
    values["agg_area_mm2"] = aggregate(areas["area_ap_mm2"], areas["area_lat_mm2"])

    auto_areas = {}
    for view, key in ((View.AP, "auto_area_ap_mm2"), (View.LATERAL, "auto_area_lat_mm2")):
        mask = auto_masks_2d.get(view)
        auto_areas[key] = mask_area(mask) if mask is not None else None
    values.update(auto_areas)
    values["agg_auto_area_mm2"] = aggregate(
        auto_areas["auto_area_ap_mm2"], auto_areas["auto_area_lat_mm2"]
    )

    if bundle.vessel is not None:
        v = bundle.vessel
        values["parent_diam_mm"] = v.parent_diam_mm
        values["left_diam_mm"] = v.left_diam_mm
        values["right_diam_mm"] = v.right_diam_mm
        ratios = vessel_ratios(v)
        values["ratio_left_parent"] = ratios["left_over_parent"]
        values["ratio_right_parent"] = ratios["right_over_parent"]
        values["ratio_larger_parent"] = ratios["larger_over_parent"]
        values["ratio_left_right"] = ratios["left_over_right"]
        angles = vessel_angles(v)
        values["left_angle_deg"] = angles.left_angle_deg
        values["right_angle_deg"] = angles.right_angle_deg
        values["norm_left_angle"] = angles.normalized_left
        values["norm_right_angle"] = angles.normalized_right

    if bundle.contour_stack_3d is not None:
        mesh = loft_mesh(bundle.contour_stack_3d, ring_samples=ring_samples)
        values["manual_shape"] = mesh_metrics(mesh)
    if auto_mask_3d is not None:
        stack = mask_to_stack(auto_mask_3d)
        mesh = loft_mesh(stack, ring_samples=ring_samples)
        values["auto_shape"] = mesh_metrics(mesh)

    return DerivedFeatures(**values)


# ---------------------------------------------------------------------------
# column catalogs

_NUMERIC_CLINICAL = (
    ("age", "age"),
    ("height_cm", "height_cm"),
    ("weight_kg", "weight_kg"),
    ("hunt_hess", "hunt_hess"),
    ("nihss", "nihss"),
    ("mrs", "mrs"),
)
_ENUM_CLINICAL = (
    ("gender", "gender", Gender),
    ("aneurysm_location", "aneurysm_location", AneurysmLocation),
    ("side", "side", Side),
    ("rupture_status", "rupture_status", RuptureStatus),
    ("detection", "detection", Detection),
)
_BOOL_CLINICAL = (("smoking_history", "smoking_history"), ("substance_abuse", "substance_abuse"))

IMAGING_2D_COLUMNS = (
    "height_ap_mm",
    "width_ap_mm",
    "dome_ap_mm",
    "neck_ap_mm",
    "height_lat_mm",
    "width_lat_mm",
    "dome_lat_mm",
    "neck_lat_mm",
    "sum3_ap_mm",
    "sum3_lat_mm",
    "agg_height_mm",
    "agg_width_mm",
    "agg_dome_mm",
    "agg_neck_mm",
    "agg_sum3_mm",
    "area_ap_mm2",
    "area_lat_mm2",
    "agg_area_mm2",
    "parent_diam_mm",
    "left_diam_mm",
    "right_diam_mm",
    "ratio_left_parent",
    "ratio_right_parent",
    "ratio_larger_parent",
    "ratio_left_right",
    "left_angle_deg",
    "right_angle_deg",
    "norm_left_angle",
    "norm_right_angle",
)
AREA_COLUMNS = ("area_ap_mm2", "area_lat_mm2", "agg_area_mm2")
IMAGING_3D_COLUMNS = ("volume_cm3", "surface_cm2", "nsi", "ipr")
AUTO_SWAPPED_3D = ("volume_cm3", "surface_cm2", "ipr")  # nsi stays manual

_AUTO_AREA_OF = {
    "area_ap_mm2": "auto_area_ap_mm2",
    "area_lat_mm2": "auto_area_lat_mm2",
    "agg_area_mm2": "agg_auto_area_mm2",
}


def clinical_column_names(cohort, vocab=None):
    """Full clinical column catalog for a cohort, in build order."""
    vocab = vocab or ConditionVocabulary.default()
    names = [n for n, _ in _NUMERIC_CLINICAL]
    for col_name, _, enum_cls in _ENUM_CLINICAL:
        names.extend(f"{col_name}={member.value}" for member in enum_cls)
    races = sorted({rec.race for rec, _ in cohort if rec.race is not None})
    names.extend(f"race={r}" for r in races)
    names.extend(n for n, _ in _BOOL_CLINICAL)
    names.append("allergy_count")
    names.append("medication_count")
    for _, conds in vocab.systems:
        names.extend(f"condition={c}" for c in conds)
    return names


def _clinical_cell(rec, name):
    """(value, missing, audit) for one clinical column of one record."""
    for col_name, field in _NUMERIC_CLINICAL:
        if name == col_name:
            v = getattr(rec, field)
            return (float(v), False, f"record.{field}") if v is not None else (0.0, True, None)
    for col_name, field, _ in _ENUM_CLINICAL:
        prefix = f"{col_name}="
        if name.startswith(prefix):
            v = getattr(rec, field)
            if v is None:
                return 0.0, True, None
            return (
                1.0 if v.value == name[len(prefix):] else 0.0,
                False,
                f"record.{field} one-hot",
            )
    if name.startswith("race="):
        if rec.race is None:
            return 0.0, True, None
        return (1.0 if rec.race == name[5:] else 0.0, False, "record.race one-hot")
    for col_name, field in _BOOL_CLINICAL:
        if name == col_name:
            v = getattr(rec, field)
            return (float(v), False, f"record.{field}") if v is not None else (0.0, True, None)
    if name == "allergy_count":
        return float(len(rec.allergies)), False, "len(record.allergies)"
    if name == "medication_count":
        return float(len(rec.medications)), False, "len(record.medications)"
    if name.startswith("condition="):
        return (
            1.0 if name[10:] in rec.conditions else 0.0,
            False,
            "record.conditions membership",
        )
    raise FeatureError(f"unknown clinical column {name!r}")


def _imaging_cell(derived, name, source):
    """(value, missing, audit) for one imaging column of one case."""
    if name in IMAGING_3D_COLUMNS:
        shape = derived.auto_shape if source is Source.AUTOMATIC else derived.manual_shape
        origin = "mask_to_stack" if source is Source.AUTOMATIC else "contour_stack_3d"
        if shape is None:
            return 0.0, True, None
        return getattr(shape, name), False, f"mesh_metrics(loft({origin})).{name}"
    field = name
    if source is Source.AUTOMATIC and name in _AUTO_AREA_OF:
        field = _AUTO_AREA_OF[name]
    v = getattr(derived, field)
    if v is None:
        return 0.0, True, None
    return float(v), False, f"derived.{field}"


# ---------------------------------------------------------------------------
# matrix builder

def _has_any_automatic(derived_map):
    for d in derived_map.values():
        if d.auto_shape is not None or d.auto_area_ap_mm2 is not None or d.auto_area_lat_mm2 is not None:
            return True
    return False


def build_matrix(cohort, derived, set_id, selected_clinical=None, selected_imaging=None, vocab=None):
    """Assemble the feature matrix for one feature set.

    cohort: list of (ClinicalRecord, OcclusionLabel); derived: map
    case_id -> DerivedFeatures; selected_clinical / selected_imaging:
    column-name lists from the selection stage (ignored for set A).
    Returns (FeatureMatrix, audit) where audit maps (case_id, column)
    to the formula or field every non-missing cell came from.  Rows are
    sorted by case_id; D and E share column names and differ only in the
    source tag of the swapped columns.
    """
    vocab = vocab or ConditionVocabulary.default()
    if isinstance(set_id, str):
        set_id = FeatureSetId(set_id)
    ordered = sorted(cohort, key=lambda pair: pair[0].case_id)
    case_ids = [rec.case_id for rec, _ in ordered]
    if len(set(case_ids)) != len(case_ids):
        raise FeatureError("duplicate case_id in cohort")
    for cid in case_ids:
        if cid not in derived:
            raise FeatureError(f"no derived features for case {cid!r}")

    all_clin = clinical_column_names(cohort, vocab)
    automatic = set_id in (FeatureSetId.E, FeatureSetId.G)
    if automatic and not _has_any_automatic(derived):
        raise FeatureError(
            f"set {set_id.value} needs automatic measurements, none present in cohort"
        )

    def imaging_source(name):
        if not automatic:
            return Source.MANUAL
        if name in AREA_COLUMNS or name in AUTO_SWAPPED_3D:
            return Source.AUTOMATIC
        return Source.MANUAL

    clin_names = []
    img2d_names = []
    img3d_names = []
    if set_id is FeatureSetId.A:
        clin_names = list(all_clin)
        img2d_names = list(IMAGING_2D_COLUMNS)
    else:
        sel_clin = list(selected_clinical or [])
        sel_img = list(selected_imaging or [])
        for n in sel_clin:
            if n not in all_clin:
                raise FeatureError(f"unknown clinical column {n!r}")
        for n in sel_img:
            if n not in IMAGING_2D_COLUMNS:
                raise FeatureError(f"unknown 2D imaging column {n!r}")
        if set_id is FeatureSetId.B:
            clin_names = sel_clin
        elif set_id in (FeatureSetId.C,):
            clin_names, img2d_names = sel_clin, sel_img
        elif set_id in (FeatureSetId.D, FeatureSetId.E):
            clin_names, img2d_names = sel_clin, sel_img
            img3d_names = list(IMAGING_3D_COLUMNS)
        elif set_id in (FeatureSetId.F, FeatureSetId.G):
            img2d_names = sel_img
            img3d_names = list(IMAGING_3D_COLUMNS)

    columns = []
    for n in clin_names:
        kind = ColumnKind.NUMERIC
        columns.append(Column(name=n, kind=kind, provenance=Provenance.CLINICAL))
    for n in img2d_names:
        columns.append(
            Column(
                name=n,
                kind=ColumnKind.NUMERIC,
                provenance=Provenance.IMAGING_2D,
                source=imaging_source(n),
            )
        )
    for n in img3d_names:
        columns.append(
            Column(
                name=n,
                kind=ColumnKind.NUMERIC,
                provenance=Provenance.IMAGING_3D,
                source=imaging_source(n),
            )
        )

    n_rows, n_cols = len(ordered), len(columns)
    values = np.zeros((n_rows, n_cols))
    missing = np.zeros((n_rows, n_cols), dtype=bool)
    audit = {}
    labels = []
    for i, (rec, label) in enumerate(ordered):
        labels.append(label)
        d = derived[rec.case_id]
        for j, col in enumerate(columns):
            if col.provenance is Provenance.CLINICAL:
                v, miss, origin = _clinical_cell(rec, col.name)
            else:
                v, miss, origin = _imaging_cell(d, col.name, col.source)
            values[i, j] = v
            missing[i, j] = miss
            if not miss:
                audit[(rec.case_id, col.name)] = origin

    matrix = FeatureMatrix(
        columns=tuple(columns),
        values=values,
        missing=missing,
        labels=tuple(labels),
        case_ids=tuple(case_ids),
    )
    return matrix, audit


# ---------------------------------------------------------------------------
# matrix CSV export

def write_matrix_csv(path, matrix):
    """Feature matrix as CSV: names row, metadata row, then one row per case.

    The metadata row tags each column kind|provenance|source (plus the
    category list for categorical columns); empty cells are missing.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "label"] + list(matrix.column_names))
        meta = ["#meta", ""]
        for c in matrix.columns:
            tag = f"{c.kind.value}|{c.provenance.value}|{c.source.value}"
            if c.kind is ColumnKind.CATEGORICAL:
                tag += "|" + ";".join(c.categories)
            meta.append(tag)
        writer.writerow(meta)
        for i, cid in enumerate(matrix.case_ids):
            row = [cid, matrix.labels[i].value]
            for j, c in enumerate(matrix.columns):
                if matrix.missing[i, j]:
                    row.append("")
                elif c.kind is ColumnKind.CATEGORICAL:
                    row.append(c.categories[int(matrix.values[i, j])])
                else:
                    row.append(repr(float(matrix.values[i, j])))
            writer.writerow(row)


def read_matrix_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0][:2] != ["case_id", "label"] or rows[1][0] != "#meta":
        raise FeatureError(f"{path}: not a feature-matrix CSV")
    names = rows[0][2:]
    columns = []
    for name, tag in zip(names, rows[1][2:]):
        parts = tag.split("|")
        if len(parts) < 3:
            raise FeatureError(f"{path}: bad metadata tag {tag!r}")
        kind = ColumnKind(parts[0])
        categories = tuple(parts[3].split(";")) if len(parts) > 3 and parts[3] else ()
        columns.append(
            Column(
                name=name,
                kind=kind,
                provenance=Provenance(parts[1]),
                source=Source(parts[2]),
                categories=categories,
            )
        )
    case_ids, labels = [], []
    values = np.zeros((len(rows) - 2, len(columns)))
    missing = np.zeros_like(values, dtype=bool)
    for i, row in enumerate(rows[2:]):
        case_ids.append(row[0])
        try:
            labels.append(OcclusionLabel.from_string(row[1]))
        except CoreError as exc:
            raise FeatureError(f"{path}: row {i + 3}: {exc}") from None
        for j, col in enumerate(columns):
            cell = row[2 + j]
            if cell == "":
                missing[i, j] = True
            elif col.kind is ColumnKind.CATEGORICAL:
                values[i, j] = col.categories.index(cell)
            else:
                values[i, j] = float(cell)
    return FeatureMatrix(
        columns=tuple(columns),
        values=values,
        missing=missing,
        labels=tuple(labels),
        case_ids=tuple(case_ids),
    )
