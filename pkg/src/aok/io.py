"""Readers and writers for the shared file formats.

Cohort tables travel as CSV, per-case annotations as JSON, masks as PGM
(2D) or raw bytes (3D) with a JSON sidecar, and segmentation corpora as
a manifest JSON.  Every format round-trips bit-exactly on the fields it
stores, and nothing here ever coerces a missing cell into a value.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from aok.core import (
    AneurysmLocation,
    ClinicalRecord,
    Contour2D,
    ContourStack3D,
    CoreError,
    Detection,
    Gender,
    Mask2D,
    Mask3D,
    Measurement2D,
    OcclusionLabel,
    RuptureStatus,
    Side,
    VesselAnnotation,
    View,
)


class IoError(ValueError):
    """Malformed file or payload/sidecar disagreement."""


# ---------------------------------------------------------------------------
# cohort CSV

COHORT_COLUMNS = (
    "case_id",
    "label",
    "age",
    "gender",
    "height_cm",
    "weight_kg",
    "race",
    "aneurysm_location",
    "side",
    "rupture_status",
    "detection",
    "hunt_hess",
    "nihss",
    "mrs",
    "allergies",
    "medications",
    "smoking_history",
    "substance_abuse",
    "conditions",
)

_ENUM_FIELDS = {
    "gender": Gender,
    "aneurysm_location": AneurysmLocation,
    "side": Side,
    "rupture_status": RuptureStatus,
    "detection": Detection,
}
_FLOAT_FIELDS = ("age", "height_cm", "weight_kg")
_INT_FIELDS = ("hunt_hess", "nihss", "mrs")
_BOOL_FIELDS = ("smoking_history", "substance_abuse")
_LIST_SEP = ";"


def _parse_bool(text, line_no, name):
    if text in ("true", "True", "1", "yes"):
        return True
    if text in ("false", "False", "0", "no"):
        return False
    raise IoError(f"line {line_no}: {name} must be a boolean, got {text!r}")


def read_cohort(path, allow_extra=False):
    """Read a cohort CSV into (ClinicalRecord, OcclusionLabel) pairs.

    Empty cells become missing.  Unknown header columns are rejected
    unless allow_extra is set (their cells are then ignored).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IoError(f"{path}: empty file, expected a header row") from None
        known = set(COHORT_COLUMNS)
        unknown = [c for c in header if c not in known]
        if unknown and not allow_extra:
            raise IoError(f"{path}: unknown columns {unknown}")
        for required in ("case_id", "label"):
            if required not in header:
                raise IoError(f"{path}: missing required column {required!r}")
        col_of = {name: header.index(name) for name in header if name in known}

        out = []
        seen_ids = set()
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise IoError(
                    f"{path}: line {line_no}: expected {len(header)} cells, got {len(row)}"
                )
            cell = {name: row[i].strip() for name, i in col_of.items()}

            case_id = cell.get("case_id", "")
            if not case_id:
                raise IoError(f"{path}: line {line_no}: empty case_id")
            if case_id in seen_ids:
                raise IoError(f"{path}: line {line_no}: duplicate case_id {case_id!r}")
            seen_ids.add(case_id)

            try:
                label = OcclusionLabel.from_string(cell.get("label", ""))
            except CoreError as exc:
                raise IoError(f"{path}: line {line_no}: {exc}") from None

            kwargs = {"case_id": case_id}
            for name in _FLOAT_FIELDS:
                text = cell.get(name, "")
                if text:
                    try:
                        kwargs[name] = float(text)
                    except ValueError:
                        raise IoError(
                            f"{path}: line {line_no}: {name} is not a number: {text!r}"
                        ) from None
            for name in _INT_FIELDS:
                text = cell.get(name, "")
                if text:
                    try:
                        kwargs[name] = int(text)
                    except ValueError:
                        raise IoError(
                            f"{path}: line {line_no}: {name} is not an integer: {text!r}"
                        ) from None
            for name, enum_cls in _ENUM_FIELDS.items():
                text = cell.get(name, "")
                if text:
                    try:
                        kwargs[name] = enum_cls(text)
                    except ValueError:
                        raise IoError(
                            f"{path}: line {line_no}: bad {name} value {text!r}"
                        ) from None
            for name in _BOOL_FIELDS:
                text = cell.get(name, "")
                if text:
                    kwargs[name] = _parse_bool(text, line_no, name)
            if cell.get("race", ""):
                kwargs["race"] = cell["race"]
            for name, factory in (
                ("conditions", frozenset),
                ("allergies", tuple),
                ("medications", tuple),
            ):
                text = cell.get(name, "")
                if text:
                    kwargs[name] = factory(
                        part.strip() for part in text.split(_LIST_SEP) if part.strip()
                    )
            out.append((ClinicalRecord(**kwargs), label))
    return out


def write_cohort(path, cohort):
    """Write (ClinicalRecord, OcclusionLabel) pairs as a cohort CSV."""

    def fmt(value):
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return repr(value)
        return str(value)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COHORT_COLUMNS)
        for rec, label in cohort:
            row = []
            for name in COHORT_COLUMNS:
                if name == "case_id":
                    row.append(rec.case_id)
                elif name == "label":
                    row.append(label.value)
                elif name in _ENUM_FIELDS:
                    val = getattr(rec, name)
                    row.append("" if val is None else val.value)
                elif name == "conditions":
                    row.append(_LIST_SEP.join(sorted(rec.conditions)))
                elif name in ("allergies", "medications"):
                    row.append(_LIST_SEP.join(getattr(rec, name)))
                else:
                    row.append(fmt(getattr(rec, name)))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# annotation JSON

@dataclass(frozen=True)
class AnnotationBundle:
    """Everything annotated on one case; any section may be absent (None).

    contours_2d maps View -> (Contour2D in pixel units, (sx, sy) mm).
    """

    case_id: str
    measurements: dict = field(default_factory=dict)  # View -> Measurement2D
    vessel: VesselAnnotation | None = None
    contours_2d: dict = field(default_factory=dict)  # View -> (Contour2D, spacing)
    contour_stack_3d: ContourStack3D | None = None

    def measurement(self, view):
        return self.measurements.get(view)

    def contour_2d(self, view):
        return self.contours_2d.get(view)


def _require(cond, msg):
    if not cond:
        raise IoError(msg)


def _point_list(raw, where):
    pts = np.asarray(raw, dtype=float)
    _require(
        pts.ndim == 2 and pts.shape[1] == 2,
        f"{where}: points must be an array of [x, y] pairs",
    )
    return pts


def read_annotation(path):
    """Read one case's annotation JSON into an AnnotationBundle."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IoError(f"{path}: not valid JSON: {exc}") from None
    return annotation_from_dict(doc, where=path)


def annotation_from_dict(doc, where="annotation"):
    _require(isinstance(doc, dict), f"{where}: top level must be an object")
    _require("case_id" in doc and doc["case_id"], f"{where}: case_id required")
    case_id = str(doc["case_id"])

    measurements = {}
    for view_name, block in (doc.get("measurements_2d") or {}).items():
        view = _view(view_name, where)
        measurements[view] = Measurement2D(
            view=view,
            height_mm=block.get("height_mm"),
            width_mm=block.get("width_mm"),
            dome_mm=block.get("dome_mm"),
            neck_mm=block.get("neck_mm"),
        )

    vessel = None
    if doc.get("vessel") is not None:
        block = doc["vessel"]
        segs = {}
        for name in ("parent_seg", "left_seg", "right_seg"):
            _require(name in block, f"{where}: vessel needs {name}")
            seg = block[name]
            _require(
                len(seg) == 2 and all(len(p) == 2 for p in seg),
                f"{where}: {name} must be two [x, y] points",
            )
            segs[name] = (
                (float(seg[0][0]), float(seg[0][1])),
                (float(seg[1][0]), float(seg[1][1])),
            )
        vessel = VesselAnnotation(
            parent_seg=segs["parent_seg"],
            left_seg=segs["left_seg"],
            right_seg=segs["right_seg"],
            parent_diam_mm=block.get("parent_diam_mm"),
            left_diam_mm=block.get("left_diam_mm"),
            right_diam_mm=block.get("right_diam_mm"),
        )

    contours = {}
    for view_name, block in (doc.get("contours_2d") or {}).items():
        view = _view(view_name, where)
        pts = _point_list(block.get("points"), f"{where}: contours_2d[{view_name}]")
        spacing = block.get("spacing_mm")
        _require(
            spacing is not None and len(spacing) == 2,
            f"{where}: contours_2d[{view_name}] needs spacing_mm [sx, sy]",
        )
        sx, sy = float(spacing[0]), float(spacing[1])
        _require(sx > 0 and sy > 0, f"{where}: spacing_mm must be > 0")
        try:
            contour = Contour2D(points=pts)
        except CoreError as exc:
            raise IoError(f"{where}: contours_2d[{view_name}]: {exc}") from None
        contours[view] = (contour, (sx, sy))

    stack = None
    if doc.get("contour_stack_3d") is not None:
        raw_slices = doc["contour_stack_3d"].get("slices")
        _require(raw_slices, f"{where}: contour_stack_3d needs slices")
        slices = []
        for i, s in enumerate(raw_slices):
            _require(
                "z_mm" in s and "points" in s,
                f"{where}: slice {i} needs z_mm and points",
            )
            pts = _point_list(s["points"], f"{where}: slice {i}")
            try:
                slices.append((float(s["z_mm"]), Contour2D(points=pts)))
            except CoreError as exc:
                raise IoError(f"{where}: slice {i}: {exc}") from None
        z = [zi for zi, _ in slices]
        if any(b <= a for a, b in zip(z, z[1:])):
            raise IoError(f"{where}: z not strictly increasing")
        try:
            stack = ContourStack3D(slices=tuple(slices))
        except CoreError as exc:
            raise IoError(f"{where}: contour_stack_3d: {exc}") from None

    return AnnotationBundle(
        case_id=case_id,
        measurements=measurements,
        vessel=vessel,
        contours_2d=contours,
        contour_stack_3d=stack,
    )


def _view(name, where):
    try:
        return View(name)
    except ValueError:
        raise IoError(f"{where}: unknown view {name!r}") from None


def annotation_to_dict(bundle):
    doc = {"case_id": bundle.case_id}
    if bundle.measurements:
        doc["measurements_2d"] = {
            view.value: {
                k: v
                for k, v in (
                    ("height_mm", m.height_mm),
                    ("width_mm", m.width_mm),
                    ("dome_mm", m.dome_mm),
                    ("neck_mm", m.neck_mm),
                )
                if v is not None
            }
            for view, m in bundle.measurements.items()
        }
    if bundle.vessel is not None:
        v = bundle.vessel
        block = {
            "parent_seg": [list(v.parent_seg[0]), list(v.parent_seg[1])],
            "left_seg": [list(v.left_seg[0]), list(v.left_seg[1])],
            "right_seg": [list(v.right_seg[0]), list(v.right_seg[1])],
        }
        for name in ("parent_diam_mm", "left_diam_mm", "right_diam_mm"):
            if getattr(v, name) is not None:
                block[name] = getattr(v, name)
        doc["vessel"] = block
    if bundle.contours_2d:
        doc["contours_2d"] = {
            view.value: {
                "points": np.asarray(contour.points).tolist(),
                "spacing_mm": list(spacing),
            }
            for view, (contour, spacing) in bundle.contours_2d.items()
        }
    if bundle.contour_stack_3d is not None:
        doc["contour_stack_3d"] = {
            "slices": [
                {"z_mm": z, "points": np.asarray(c.points).tolist()}
                for z, c in bundle.contour_stack_3d.slices
            ]
        }
    return doc


def write_annotation(path, bundle):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(annotation_to_dict(bundle), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# masks

def _sidecar_path(path):
    return str(path) + ".json"


def write_mask_2d(path, mask):
    """Write a Mask2D as binary PGM (P5, maxval 255) plus a JSON sidecar."""
    ny, nx = mask.voxels.shape
    payload = np.where(mask.voxels, 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(payload.tobytes())
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump({"spacing_mm": list(mask.spacing_mm)}, fh, sort_keys=True)
        fh.write("\n")


def _read_pgm_header(fh, path):
    """Parse the P5 header, honoring '#' comments, returning (nx, ny, maxval)."""

    def tokens():
        while True:
            line = fh.readline()
            if not line:
                raise IoError(f"{path}: truncated PGM header")
            line = line.split(b"#", 1)[0]
            for tok in line.split():
                yield tok

    tok = tokens()
    magic = next(tok)
    if magic != b"P5":
        raise IoError(f"{path}: unsupported PGM magic {magic!r} (want P5)")
    nx = int(next(tok))
    ny = int(next(tok))
    maxval = int(next(tok))
    return nx, ny, maxval


def read_mask_2d(path):
    sidecar = _sidecar_path(path)
    if not os.path.exists(sidecar):
        raise IoError(f"{path}: sidecar {sidecar} not found")
    with open(sidecar, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    spacing = meta.get("spacing_mm")
    if spacing is None or len(spacing) != 2:
        raise IoError(f"{sidecar}: needs spacing_mm [sx, sy]")

    with open(path, "rb") as fh:
        nx, ny, maxval = _read_pgm_header(fh, path)
        if maxval != 255:
            raise IoError(f"{path}: unsupported maxval {maxval} (want 255)")
        payload = fh.read()
    if len(payload) != nx * ny:
        raise IoError(
            f"{path}: payload is {len(payload)} bytes, header says {nx}x{ny}"
        )
    voxels = np.frombuffer(payload, dtype=np.uint8).reshape(ny, nx) != 0
    return Mask2D(voxels=voxels, spacing_mm=(spacing[0], spacing[1]))


def write_mask_3d(path, mask):
    """Write a Mask3D as raw unsigned bytes (x fastest) plus a JSON sidecar."""
    nz, ny, nx = mask.voxels.shape
    payload = np.where(mask.voxels, 1, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(payload.tobytes())  # C order over (z, y, x) = x fastest
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(
            {"dims": [nx, ny, nz], "spacing_mm": list(mask.spacing_mm)},
            fh,
            sort_keys=True,
        )
        fh.write("\n")


def read_mask_3d(path):
    sidecar = _sidecar_path(path)
    if not os.path.exists(sidecar):
        raise IoError(f"{path}: sidecar {sidecar} not found")
    with open(sidecar, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    dims = meta.get("dims")
    spacing = meta.get("spacing_mm")
    if dims is None or len(dims) != 3:
        raise IoError(f"{sidecar}: needs dims [nx, ny, nz]")
    if spacing is None or len(spacing) != 3:
        raise IoError(f"{sidecar}: needs spacing_mm [sx, sy, sz]")
    nx, ny, nz = (int(d) for d in dims)

    with open(path, "rb") as fh:
        payload = fh.read()
    if len(payload) != nx * ny * nz:
        raise IoError(
            f"{path}: payload is {len(payload)} bytes, sidecar dims want {nx * ny * nz}"
        )
    voxels = np.frombuffer(payload, dtype=np.uint8).reshape(nz, ny, nx) != 0
    return Mask3D(voxels=voxels, spacing_mm=(spacing[0], spacing[1], spacing[2]))


def write_gray_pgm(path, pixels, spacing_mm):
    """Write an 8-bit grayscale image as P5 PGM plus a spacing sidecar."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise IoError(f"{path}: grayscale image must be 2D, got {arr.ndim} axes")
    if arr.dtype != np.uint8:
        raise IoError(f"{path}: grayscale image must be uint8, got {arr.dtype}")
    ny, nx = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump({"spacing_mm": [float(s) for s in spacing_mm]}, fh, sort_keys=True)
        fh.write("\n")


def read_gray_pgm(path):
    """Read a P5 PGM back as (uint8 array [row, col], (sx, sy))."""
    sidecar = _sidecar_path(path)
    if not os.path.exists(sidecar):
        raise IoError(f"{path}: sidecar {sidecar} not found")
    with open(sidecar, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    spacing = meta.get("spacing_mm")
    if spacing is None or len(spacing) != 2:
        raise IoError(f"{sidecar}: needs spacing_mm [sx, sy]")
    with open(path, "rb") as fh:
        nx, ny, maxval = _read_pgm_header(fh, path)
        if maxval != 255:
            raise IoError(f"{path}: unsupported maxval {maxval} (want 255)")
        payload = fh.read()
    if len(payload) != nx * ny:
        raise IoError(
            f"{path}: payload is {len(payload)} bytes, header says {nx}x{ny}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(ny, nx)
    return arr, (float(spacing[0]), float(spacing[1]))


def write_gray_raw(path, voxels, spacing_mm):
    """Write an 8-bit grayscale volume as raw bytes (x fastest) plus sidecar."""
    arr = np.asarray(voxels)
    if arr.ndim != 3:
        raise IoError(f"{path}: grayscale volume must be 3D, got {arr.ndim} axes")
    if arr.dtype != np.uint8:
        raise IoError(f"{path}: grayscale volume must be uint8, got {arr.dtype}")
    nz, ny, nx = arr.shape
    with open(path, "wb") as fh:
        fh.write(arr.tobytes())
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "dims": [nx, ny, nz],
                "spacing_mm": [float(s) for s in spacing_mm],
            },
            fh,
            sort_keys=True,
        )
        fh.write("\n")


def read_gray_raw(path):
    """Read a raw grayscale volume back as (uint8 [slice, row, col], spacing)."""
    sidecar = _sidecar_path(path)
    if not os.path.exists(sidecar):
        raise IoError(f"{path}: sidecar {sidecar} not found")
    with open(sidecar, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    dims = meta.get("dims")
    spacing = meta.get("spacing_mm")
    if dims is None or len(dims) != 3:
        raise IoError(f"{sidecar}: needs dims [nx, ny, nz]")
    if spacing is None or len(spacing) != 3:
        raise IoError(f"{sidecar}: needs spacing_mm [sx, sy, sz]")
    nx, ny, nz = (int(d) for d in dims)
    with open(path, "rb") as fh:
        payload = fh.read()
    if len(payload) != nx * ny * nz:
        raise IoError(
            f"{path}: payload is {len(payload)} bytes, sidecar dims want {nx * ny * nz}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(nz, ny, nx)
    return arr, (float(spacing[0]), float(spacing[1]), float(spacing[2]))


# ---------------------------------------------------------------------------
# segmentation manifest

@dataclass(frozen=True)
class SegCase:
    """One segmentation corpus entry; paths resolved against the manifest."""

    case_id: str
    image: str
    mask_gt: str
    split: str
    mask_pred: str | None = None


@dataclass(frozen=True)
class SegManifest:
    cases: tuple
    base_dir: str = "."

    def resolve(self, rel):
        return os.path.normpath(os.path.join(self.base_dir, rel))

    def splits(self):
        return tuple(sorted({c.split for c in self.cases}))

    def by_split(self, split):
        return tuple(c for c in self.cases if c.split == split)


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IoError(f"{path}: not valid JSON: {exc}") from None
    _require(isinstance(doc, dict) and "cases" in doc, f"{path}: needs a cases list")
    cases = []
    for i, block in enumerate(doc["cases"]):
        for key in ("case_id", "image", "mask_gt", "split"):
            _require(key in block, f"{path}: case {i} needs {key}")
        cases.append(
            SegCase(
                case_id=str(block["case_id"]),
                image=str(block["image"]),
                mask_gt=str(block["mask_gt"]),
                split=str(block["split"]),
                mask_pred=block.get("mask_pred"),
            )
        )
    return SegManifest(cases=tuple(cases), base_dir=os.path.dirname(os.path.abspath(path)))


def write_manifest(path, manifest):
    doc = {"cases": []}
    for c in manifest.cases:
        block = {
            "case_id": c.case_id,
            "image": c.image,
            "mask_gt": c.mask_gt,
            "split": c.split,
        }
        if c.mask_pred is not None:
            block["mask_pred"] = c.mask_pred
        doc["cases"].append(block)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
