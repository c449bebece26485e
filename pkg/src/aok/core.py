"""Domain types shared by every other module.

Pure in-memory types with invariant checks only; file formats live in
``aok.io`` and all real computation in the downstream modules.  Missing
values are represented explicitly (``None`` on records, a boolean mask on
feature matrices), never as an in-band sentinel.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np


class CoreError(ValueError):
    """Invariant violation in a domain type."""


# ---------------------------------------------------------------------------
# enums

class OcclusionLabel(enum.Enum):
    """Binary 12-month outcome; the two adverse grades are merged."""

    COMPLETE_OCCLUSION = "Complete Occlusion"
    PARTIAL_OCCLUSION = "Partial Occlusion"

    @classmethod
    def from_string(cls, text):
        for member in cls:
            if member.value == text:
                return member
        raise CoreError(f"unknown occlusion label: {text!r}")

    def __str__(self):
        return self.value


class View(enum.Enum):
    AP = "AP"
    LATERAL = "Lateral"


class Gender(enum.Enum):
    M = "M"
    F = "F"


class AneurysmLocation(enum.Enum):
    ACOMM_A = "ACommA"
    BASILAR = "Basilar"
    ICA_TERMINUS = "ICATerminus"
    MCA_BIFURCATION = "MCABifurcation"


class Side(enum.Enum):
    RIGHT = "Right"
    LEFT = "Left"
    MIDLINE = "Midline"


class RuptureStatus(enum.Enum):
    RUPTURED = "Ruptured"
    UNRUPTURED = "Unruptured"


class Detection(enum.Enum):
    INCIDENTAL = "Incidental"
    SYMPTOMATIC = "Symptomatic"


class ColumnKind(enum.Enum):
    NUMERIC = "Numeric"
    CATEGORICAL = "Categorical"


class Provenance(enum.Enum):
    CLINICAL = "Clinical"
    IMAGING_2D = "Imaging2D"
    IMAGING_3D = "Imaging3D"


class Source(enum.Enum):
    MANUAL = "Manual"
    AUTOMATIC = "Automatic"


class FeatureSetId(enum.Enum):
    """Named feature-set recipes.

    A: all clinical plus pre-operative imaging (no 3D mesh features).
    B: selected clinical only.
    C: B plus selected manual 2D imaging.
    D: C plus manual 3D sac measurements (volume, surface, NSI, IPR).
    E: D with the 2D contour area and 3D volume/surface/IPR swapped for
       their automatically segmented versions (NSI stays manual).
    F: imaging-only subset of D.
    G: imaging-only subset of E.
    """

    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"
    G = "G"


# ---------------------------------------------------------------------------
# condition vocabulary

@dataclass(frozen=True)
class ConditionVocabulary:
    """Health-condition names grouped by body system.

    Ships as an editable JSON data file; the packaged default covers 67
    conditions across 14 body systems.
    """

    systems: tuple  # of (system_name, tuple_of_condition_names)

    def __post_init__(self):
        seen = set()
        for _, conds in self.systems:
            for c in conds:
                if c in seen:
                    raise CoreError(f"duplicate condition in vocabulary: {c!r}")
                seen.add(c)

    @property
    def conditions(self):
        return frozenset(c for _, conds in self.systems for c in conds)

    def system_of(self, condition):
        for name, conds in self.systems:
            if condition in conds:
                return name
        return None

    @classmethod
    def from_dict(cls, data):
        systems = tuple(
            (name, tuple(conds)) for name, conds in data["systems"].items()
        )
        return cls(systems=systems)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls):
        text = (
            resources.files("aok").joinpath("data/condition_vocabulary.json").read_text()
        )
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# clinical record

@dataclass(frozen=True)
class ClinicalRecord:
    """One patient's structured clinical profile; any field may be missing."""

    case_id: str
    age: float | None = None
    gender: Gender | None = None
    height_cm: float | None = None
    weight_kg: float | None = None
    race: str | None = None
    aneurysm_location: AneurysmLocation | None = None
    side: Side | None = None
    rupture_status: RuptureStatus | None = None
    detection: Detection | None = None
    hunt_hess: int | None = None
    nihss: int | None = None
    mrs: int | None = None
    smoking_history: bool | None = None
    substance_abuse: bool | None = None
    conditions: frozenset = frozenset()
    allergies: tuple = ()
    medications: tuple = ()

    def __post_init__(self):
        if not self.case_id:
            raise CoreError("case_id must be non-empty")
        object.__setattr__(self, "conditions", frozenset(self.conditions))
        object.__setattr__(self, "allergies", tuple(self.allergies))
        object.__setattr__(self, "medications", tuple(self.medications))


def validate_record(rec, vocab):
    """Check a record against its invariants and a condition vocabulary.

    Returns a list of human-readable violations; empty iff the record is
    well formed.  Violations are data, not exceptions.
    """
    violations = []

    def check_range(name, value, lo, hi):
        if value is not None and not (lo <= value <= hi):
            violations.append(f"{name} out of range [{lo}, {hi}]: {value}")

    check_range("age", rec.age, 0, 130)
    check_range("height_cm", rec.height_cm, 30, 260)
    check_range("weight_kg", rec.weight_kg, 2, 400)
    check_range("hunt_hess", rec.hunt_hess, 0, 5)
    check_range("mrs", rec.mrs, 0, 6)
    if rec.nihss is not None and rec.nihss < 0:
        violations.append(f"nihss must be >= 0: {rec.nihss}")
    for cond in sorted(rec.conditions):
        if cond not in vocab.conditions:
            violations.append(f"condition not in vocabulary: {cond!r}")
    return violations


# ---------------------------------------------------------------------------
# 2D annotation types

def _positive_or_none(name, value):
    if value is not None and not value > 0:
        raise CoreError(f"{name} must be > 0, got {value}")


@dataclass(frozen=True)
class Measurement2D:
    """Linear sac dimensions on one projection, in mm."""

    view: View
    height_mm: float | None = None
    width_mm: float | None = None
    dome_mm: float | None = None
    neck_mm: float | None = None

    def __post_init__(self):
        for name in ("height_mm", "width_mm", "dome_mm", "neck_mm"):
            _positive_or_none(name, getattr(self, name))


@dataclass(frozen=True)
class VesselAnnotation:
    """Parent and daughter vessel segments plus optional diameters, in mm.

    Segments are point pairs ((x0, y0), (x1, y1)).
    """

    parent_seg: tuple
    left_seg: tuple
    right_seg: tuple
    parent_diam_mm: float | None = None
    left_diam_mm: float | None = None
    right_diam_mm: float | None = None

    def __post_init__(self):
        for name in ("parent_seg", "left_seg", "right_seg"):
            seg = getattr(self, name)
            (x0, y0), (x1, y1) = seg
            if x0 == x1 and y0 == y1:
                raise CoreError(f"{name} has zero length")
        for name in ("parent_diam_mm", "left_diam_mm", "right_diam_mm"):
            _positive_or_none(name, getattr(self, name))


# ---------------------------------------------------------------------------
# contours

def _segments_intersect(p, q, r, s, eps):
    """True if segment pq intersects segment rs (touching counts)."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > eps:
            return 1
        if v < -eps:
            return -1
        return 0

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
            and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps
        )

    o1 = orient(p, q, r)
    o2 = orient(p, q, s)
    o3 = orient(r, s, p)
    o4 = orient(r, s, q)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(p, q, r):
        return True
    if o2 == 0 and on_segment(p, q, s):
        return True
    if o3 == 0 and on_segment(r, s, p):
        return True
    if o4 == 0 and on_segment(r, s, q):
        return True
    return False


def polygon_is_simple(points):
    """True if the closed polygon has no self-intersection.

    Adjacent edges may share their common endpoint; any other contact
    (crossing, overlap, repeated vertex) disqualifies.  O(n^2) with a
    vectorized bounding-box prefilter.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 3:
        return False
    if not np.all(np.isfinite(pts)):
        return False
    nxt = np.roll(pts, -1, axis=0)
    lengths = np.hypot(*(nxt - pts).T)
    if np.any(lengths == 0):
        return False
    scale = float(np.max(np.abs(pts))) or 1.0
    eps = 1e-12 * scale * scale

    lo = np.minimum(pts, nxt)
    hi = np.maximum(pts, nxt)
    for i in range(n - 1):
        # candidate edges whose bounding boxes overlap edge i
        j = np.arange(i + 1, n)
        overlap = ~(
            (hi[j, 0] < lo[i, 0])
            | (lo[j, 0] > hi[i, 0])
            | (hi[j, 1] < lo[i, 1])
            | (lo[j, 1] > hi[i, 1])
        )
        for jj in j[overlap]:
            if jj == i + 1 or (i == 0 and jj == n - 1):
                continue  # adjacent, sharing one endpoint
            if _segments_intersect(pts[i], pts[(i + 1) % n], pts[jj], pts[(jj + 1) % n], eps):
                return False
    return True


@dataclass(frozen=True, eq=False)
class Contour2D:
    """Closed simple polygon, ordered (x, y) points; last connects to first."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise CoreError(f"contour points must be (n, 2), got {pts.shape}")
        if len(pts) < 3:
            raise CoreError(f"contour needs >= 3 points, got {len(pts)}")
        if not polygon_is_simple(pts):
            raise CoreError("contour is not a simple polygon")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class ContourStack3D:
    """Planar sac contours at strictly increasing z positions (mm)."""

    slices: tuple  # of (z_mm, Contour2D)

    def __post_init__(self):
        slices = tuple(self.slices)
        if len(slices) < 2:
            raise CoreError(f"contour stack needs >= 2 slices, got {len(slices)}")
        z = np.array([s[0] for s in slices], dtype=float)
        if not np.all(np.diff(z) > 0):
            raise CoreError("z not strictly increasing")
        for _, contour in slices:
            if not isinstance(contour, Contour2D):
                raise CoreError("stack slices must hold Contour2D instances")
        object.__setattr__(self, "slices", slices)

    @property
    def z_values(self):
        return np.array([z for z, _ in self.slices])

    def __len__(self):
        return len(self.slices)


# ---------------------------------------------------------------------------
# masks

@dataclass(frozen=True, eq=False)
class Mask2D:
    """Binary pixel mask; voxels indexed [row, col], pixel center at
    (col * sx, row * sy) in mm."""

    voxels: np.ndarray
    spacing_mm: tuple

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=bool)
        if vox.ndim != 2:
            raise CoreError(f"2D mask must have 2 axes, got {vox.ndim}")
        sx, sy = self.spacing_mm
        if not (sx > 0 and sy > 0):
            raise CoreError(f"spacing must be positive, got {self.spacing_mm}")
        vox = vox.copy()
        vox.flags.writeable = False
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing_mm", (float(sx), float(sy)))

    @property
    def dims(self):
        ny, nx = self.voxels.shape
        return (nx, ny)

    @property
    def foreground_count(self):
        return int(self.voxels.sum())


@dataclass(frozen=True, eq=False)
class Mask3D:
    """Binary voxel mask; voxels indexed [slice, row, col], voxel center at
    (col * sx, row * sy, slice * sz) in mm."""

    voxels: np.ndarray
    spacing_mm: tuple

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=bool)
        if vox.ndim != 3:
            raise CoreError(f"3D mask must have 3 axes, got {vox.ndim}")
        sx, sy, sz = self.spacing_mm
        if not (sx > 0 and sy > 0 and sz > 0):
            raise CoreError(f"spacing must be positive, got {self.spacing_mm}")
        vox = vox.copy()
        vox.flags.writeable = False
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing_mm", (float(sx), float(sy), float(sz)))

    @property
    def dims(self):
        nz, ny, nx = self.voxels.shape
        return (nx, ny, nz)

    @property
    def foreground_count(self):
        return int(self.voxels.sum())


# ---------------------------------------------------------------------------
# triangle mesh

@dataclass(frozen=True, eq=False)
class SacMesh:
    """Closed, consistently outward-oriented triangle surface of the sac.

    Construction validates that every directed edge appears exactly once
    (closed 2-manifold with consistent winding) and flips the winding
    globally if the enclosed signed volume comes out negative, so
    ``volume_mm3`` is always positive.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    volume_mm3: float = field(init=False)
    surface_mm2: float = field(init=False)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        tris = np.asarray(self.triangles, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise CoreError(f"vertices must be (n, 3), got {verts.shape}")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise CoreError(f"triangles must be (m, 3), got {tris.shape}")
        if len(tris) < 4:
            raise CoreError("a closed surface needs >= 4 triangles")
        if tris.min(initial=0) < 0 or tris.max(initial=-1) >= len(verts):
            raise CoreError("triangle index out of range")

        directed = np.concatenate(
            [tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=0
        )
        if np.any(directed[:, 0] == directed[:, 1]):
            raise CoreError("degenerate triangle edge (repeated vertex)")
        # each directed edge once and its reverse once <=> closed 2-manifold
        # with consistent orientation
        keys = directed[:, 0].astype(np.int64) * len(verts) + directed[:, 1]
        if len(np.unique(keys)) != len(keys):
            raise CoreError("mesh is not a 2-manifold: duplicated directed edge")
        rev = directed[:, 1].astype(np.int64) * len(verts) + directed[:, 0]
        if not np.array_equal(np.sort(keys), np.sort(rev)):
            raise CoreError("mesh is not closed: unmatched boundary edge")

        signed = _signed_volume(verts, tris)
        if signed < 0:
            tris = tris[:, [0, 2, 1]]
            signed = -signed
        if signed <= 0:
            raise CoreError("mesh encloses no volume")

        verts = verts.copy()
        tris = tris.copy()
        verts.flags.writeable = False
        tris.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "volume_mm3", float(signed))
        object.__setattr__(self, "surface_mm2", float(_surface_area(verts, tris)))


def _signed_volume(vertices, triangles):
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def _surface_area(vertices, triangles):
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return float(np.linalg.norm(np.cross(b - a, c - a), axis=1).sum() / 2.0)


# ---------------------------------------------------------------------------
# feature matrix

@dataclass(frozen=True)
class Column:
    """Schema entry of a feature-matrix column."""

    name: str
    kind: ColumnKind
    provenance: Provenance
    source: Source = Source.MANUAL
    categories: tuple = ()

    def __post_init__(self):
        if self.kind is ColumnKind.CATEGORICAL and not self.categories:
            raise CoreError(f"categorical column {self.name!r} needs categories")
        object.__setattr__(self, "categories", tuple(self.categories))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Named columns over cases with an explicit per-cell missing flag.

    Numeric cells hold the value; categorical cells hold an index into the
    column's ``categories``.  ``missing`` marks cells that carry no value
    (their stored number is meaningless and kept at 0).
    """

    columns: tuple
    values: np.ndarray
    missing: np.ndarray
    labels: tuple
    case_ids: tuple

    def __post_init__(self):
        cols = tuple(self.columns)
        values = np.asarray(self.values, dtype=float)
        miss = np.asarray(self.missing, dtype=bool)
        labels = tuple(self.labels)
        case_ids = tuple(self.case_ids)

        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise CoreError("column names must be unique")
        n, m = values.shape if values.ndim == 2 else (len(values), -1)
        if values.ndim != 2 or m != len(cols):
            raise CoreError(
                f"values shape {values.shape} does not match {len(cols)} columns"
            )
        if miss.shape != values.shape:
            raise CoreError("missing mask shape must match values")
        if len(labels) != n or len(case_ids) != n:
            raise CoreError("labels and case_ids must cover every row")
        for lab in labels:
            if not isinstance(lab, OcclusionLabel):
                raise CoreError("labels must be OcclusionLabel values")
        if np.any(~np.isfinite(values[~miss])):
            raise CoreError("non-missing cells must be finite")
        values = values.copy()
        values[miss] = 0.0
        miss = miss.copy()
        values.flags.writeable = False
        miss.flags.writeable = False
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", miss)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "case_ids", case_ids)

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    @property
    def column_names(self):
        return tuple(c.name for c in self.columns)

    def col_index(self, name):
        try:
            return self.column_names.index(name)
        except ValueError:
            raise CoreError(f"no such column: {name!r}") from None

    def column(self, name):
        return self.columns[self.col_index(name)]

    def label_array(self):
        """Labels as 0/1 with 1 = Complete Occlusion (the positive class)."""
        return np.array(
            [1 if lab is OcclusionLabel.COMPLETE_OCCLUSION else 0 for lab in self.labels],
            dtype=np.int64,
        )

    def select_columns(self, names):
        idx = [self.col_index(n) for n in names]
        return FeatureMatrix(
            columns=tuple(self.columns[i] for i in idx),
            values=self.values[:, idx],
            missing=self.missing[:, idx],
            labels=self.labels,
            case_ids=self.case_ids,
        )

    def select_rows(self, indices):
        idx = np.asarray(indices, dtype=int)
        return FeatureMatrix(
            columns=self.columns,
            values=self.values[idx],
            missing=self.missing[idx],
            labels=tuple(self.labels[i] for i in idx),
            case_ids=tuple(self.case_ids[i] for i in idx),
        )

    def schema(self):
        """Prediction-relevant schema: (name, kind, categories) per column."""
        return tuple((c.name, c.kind, c.categories) for c in self.columns)
