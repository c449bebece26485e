"""Synthetic cohorts, annotation bundles, and shape datasets.

Everything here exists so the pipeline can be exercised at desk scale:
class-conditional Gaussian clinical features, latent-geometry annotation
bundles whose derived features carry planted effect sizes, analytic test
shapes, and a toy blob corpus for segmentation training.

Determinism: every generator is a pure function of its seed.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from aok.core import (
    ClinicalRecord,
    Contour2D,
    ContourStack3D,
    AneurysmLocation,
    ConditionVocabulary,
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
from aok.io import (
    AnnotationBundle,
    SegCase,
    SegManifest,
    write_gray_pgm,
    write_gray_raw,
    write_manifest,
    write_mask_2d,
    write_mask_3d,
)

THOMSEN_P = 1.6075  # ellipsoid surface approximation, worst error about 1.06%

MIN_SAMPLES_ACROSS_RADIUS = 8


class SynthError(ValueError):
    pass


# ---------------------------------------------------------------------------
# shapes

class ShapeKind(enum.Enum):
    SPHERE = "Sphere"
    ELLIPSOID = "Ellipsoid"
    PRISM = "Prism"
    BLOB = "Blob"


class ShapeForm(enum.Enum):
    STACK = "Stack"
    MASK3D = "Mask3D"
    MASK2D = "Mask2D"


@dataclass(frozen=True)
class ShapeTruth:
    """Closed-form reference values where they exist (None where not).

    The ellipsoid surface is the Thomsen p=1.6075 approximation, good to
    about 1.06% in the worst case; volume values are exact.
    """

    volume_mm3: float | None
    surface_mm2: float | None
    note: str = ""


def _require_positive(params, names):
    for name in names:
        val = params.get(name)
        if val is None or not (float(val) > 0):
            raise SynthError(f"shape parameter {name!r} must be positive, got {val}")


def _blob_radius_field(r, amplitude, seed, n_terms=6, freq=(1.5, 3.5)):
    """A smooth star-shaped radius function R(u) = r*(1 + amp*f(u)).

    f is a fixed random sum of cosines of the unit direction with
    spatial frequencies drawn from freq, normalized to [-1, 1], so the
    blob stays star-shaped for amplitude < 1.
    """
    rng = np.random.default_rng(seed)
    ks = rng.normal(0.0, 1.0, (n_terms, 3))
    ks *= (rng.uniform(freq[0], freq[1], n_terms) / np.linalg.norm(ks, axis=1))[:, None]
    phases = rng.uniform(0.0, 2.0 * np.pi, n_terms)

    def radius(u):
        u = np.asarray(u, dtype=float)
        flat = u.reshape(-1, 3)
        f = np.cos(flat @ ks.T + phases).sum(axis=1) / n_terms
        out = r * (1.0 + amplitude * f)
        return out.reshape(u.shape[:-1])

    return radius


def _shape_truth(kind, params):
    if kind is ShapeKind.SPHERE:
        r = float(params["r"])
        return ShapeTruth(4.0 / 3.0 * math.pi * r**3, 4.0 * math.pi * r * r)
    if kind is ShapeKind.ELLIPSOID:
        a, b, c = (float(params[k]) for k in ("a", "b", "c"))
        p = THOMSEN_P
        s = 4.0 * math.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3.0) ** (1.0 / p)
        return ShapeTruth(
            4.0 / 3.0 * math.pi * a * b * c,
            s,
            note="surface is the Thomsen approximation (p=1.6075, ~1.06% bound)",
        )
    if kind is ShapeKind.PRISM:
        lx, ly, lz = (float(params[k]) for k in ("lx", "ly", "lz"))
        return ShapeTruth(lx * ly * lz, 2.0 * (lx * ly + lx * lz + ly * lz))
    return ShapeTruth(None, None, note="blob has no closed form")


def _smallest_radius(kind, params):
    if kind is ShapeKind.SPHERE:
        return float(params["r"])
    if kind is ShapeKind.ELLIPSOID:
        return min(float(params[k]) for k in ("a", "b", "c"))
    if kind is ShapeKind.PRISM:
        # the smallest edge stands in for the radius scale of a box
        return min(float(params[k]) for k in ("lx", "ly", "lz"))
    amp = float(params.get("amplitude", 0.25))
    return float(params["r"]) * (1.0 - amp)


def _ring(ax, by, z, n_points):
    th = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    return Contour2D(
        points=np.column_stack([ax * np.cos(th), by * np.sin(th)])
    )


def _ellipsoid_stack(a, b, c, resolution, n_points=64):
    n = max(2, int(round(2.0 * c / resolution)))
    slices = []
    for i in range(n):
        z = -c + (i + 0.5) * (2.0 * c / n)
        s = math.sqrt(max(1.0 - (z / c) ** 2, 0.0))
        if a * s < 1e-6:
            continue
        slices.append((z, _ring(a * s, b * s, z, n_points)))
    return ContourStack3D(slices=tuple(slices))


def _prism_stack(lx, ly, lz, resolution):
    n = max(2, int(round(lz / resolution)) + 1)
    corners = np.array(
        [
            [lx / 2, ly / 2],
            [-lx / 2, ly / 2],
            [-lx / 2, -ly / 2],
            [lx / 2, -ly / 2],
        ]
    )
    # densify each edge so arc-length resampling in the loft stays faithful
    pts = []
    for i in range(4):
        p, q = corners[i], corners[(i + 1) % 4]
        steps = max(1, int(math.ceil(np.linalg.norm(q - p) / resolution)))
        for t in range(steps):
            pts.append(p + (q - p) * (t / steps))
    ring = Contour2D(points=np.array(pts))
    zs = np.linspace(-lz / 2.0, lz / 2.0, n)
    return ContourStack3D(slices=tuple((float(z), ring) for z in zs))


def _blob_stack(radius_fn, r, amplitude, resolution, n_points=64):
    top = float(radius_fn(np.array([0.0, 0.0, 1.0])))
    bottom = float(radius_fn(np.array([0.0, 0.0, -1.0])))
    z_lo, z_hi = -bottom, top
    n = max(2, int(round((z_hi - z_lo) / resolution)))
    th = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    cos_t, sin_t = np.cos(th), np.sin(th)
    slices = []
    for i in range(n):
        z = z_lo + (i + 0.5) * ((z_hi - z_lo) / n)
        rho = np.full(n_points, max(math.sqrt(max(r * r - z * z, 0.0)), 0.1 * r))
        for _ in range(15):
            norm = np.sqrt(rho**2 + z * z)
            u = np.column_stack([rho * cos_t / norm, rho * sin_t / norm, np.full(n_points, z) / norm])
            rr = radius_fn(u)
            rho = np.sqrt(np.maximum(rr**2 - z * z, 0.0))
        if np.any(rho < 1e-6):
            continue  # slice pokes past the surface near a pole
        slices.append((z, Contour2D(points=np.column_stack([rho * cos_t, rho * sin_t]))))
    return ContourStack3D(slices=tuple(slices))


def _voxel_grid(extent, resolution):
    k = int(math.ceil(extent / resolution)) + 1
    coords = np.arange(-k, k + 1) * resolution
    return coords


def _inside_fn(kind, params, radius_fn):
    if kind is ShapeKind.SPHERE:
        r = float(params["r"])
        return lambda x, y, z: x * x + y * y + z * z <= r * r
    if kind is ShapeKind.ELLIPSOID:
        a, b, c = (float(params[k]) for k in ("a", "b", "c"))
        return lambda x, y, z: (x / a) ** 2 + (y / b) ** 2 + (z / c) ** 2 <= 1.0
    if kind is ShapeKind.PRISM:
        lx, ly, lz = (float(params[k]) for k in ("lx", "ly", "lz"))
        # half-open box so a spacing-1 10x10x10 prism holds exactly 1000 voxels
        return lambda x, y, z: (
            (-lx / 2 <= x) & (x < lx / 2)
            & (-ly / 2 <= y) & (y < ly / 2)
            & (-lz / 2 <= z) & (z < lz / 2)
        )

    def inside(x, y, z):
        d = np.sqrt(x * x + y * y + z * z)
        d_safe = np.where(d == 0.0, 1.0, d)
        u = np.stack([x / d_safe, y / d_safe, z / d_safe], axis=-1)
        return d <= np.where(d == 0.0, np.inf, radius_fn(u))

    return inside


def _shape_extent(kind, params):
    if kind is ShapeKind.SPHERE:
        return float(params["r"])
    if kind is ShapeKind.ELLIPSOID:
        return max(float(params[k]) for k in ("a", "b", "c"))
    if kind is ShapeKind.PRISM:
        return max(float(params[k]) for k in ("lx", "ly", "lz")) / 2.0
    amp = float(params.get("amplitude", 0.25))
    return float(params["r"]) * (1.0 + amp)


def gen_shape(kind, params, form, resolution):
    """Build a geometric object plus its analytic truth.

    kind: ShapeKind; params: dict of dimensions in mm (sphere r; ellipsoid
    a, b, c; prism lx, ly, lz; blob r, amplitude, seed); form: ShapeForm;
    resolution: slice/voxel spacing in mm.

    Returns (object, ShapeTruth) where the object is a ContourStack3D,
    Mask3D, or Mask2D.  Raises when the resolution gives fewer than 8
    samples across the smallest radius.
    """
    if not isinstance(kind, ShapeKind) or not isinstance(form, ShapeForm):
        raise SynthError("kind must be a ShapeKind and form a ShapeForm")
    if kind is ShapeKind.SPHERE:
        _require_positive(params, ("r",))
    elif kind is ShapeKind.ELLIPSOID:
        _require_positive(params, ("a", "b", "c"))
    elif kind is ShapeKind.PRISM:
        _require_positive(params, ("lx", "ly", "lz"))
    else:
        _require_positive(params, ("r",))
        amp = float(params.get("amplitude", 0.25))
        if not (0.0 < amp < 0.5):
            raise SynthError(f"blob amplitude must be in (0, 0.5), got {amp}")
    if not (resolution > 0):
        raise SynthError(f"resolution must be positive, got {resolution}")
    smallest = _smallest_radius(kind, params)
    if smallest / resolution < MIN_SAMPLES_ACROSS_RADIUS:
        raise SynthError(
            f"resolution {resolution} too coarse: {smallest / resolution:.1f} "
            f"samples across the smallest radius {smallest:.2f} mm, "
            f"need >= {MIN_SAMPLES_ACROSS_RADIUS}"
        )
    truth = _shape_truth(kind, params)

    radius_fn = None
    if kind is ShapeKind.BLOB:
        radius_fn = _blob_radius_field(
            float(params["r"]),
            float(params.get("amplitude", 0.25)),
            int(params.get("seed", 0)),
        )

    if form is ShapeForm.STACK:
        if kind is ShapeKind.SPHERE:
            r = float(params["r"])
            return _ellipsoid_stack(r, r, r, resolution), truth
        if kind is ShapeKind.ELLIPSOID:
            a, b, c = (float(params[k]) for k in ("a", "b", "c"))
            return _ellipsoid_stack(a, b, c, resolution), truth
        if kind is ShapeKind.PRISM:
            lx, ly, lz = (float(params[k]) for k in ("lx", "ly", "lz"))
            return _prism_stack(lx, ly, lz, resolution), truth
        return (
            _blob_stack(
                radius_fn,
                float(params["r"]),
                float(params.get("amplitude", 0.25)),
                resolution,
            ),
            truth,
        )

    inside = _inside_fn(kind, params, radius_fn)
    coords = _voxel_grid(_shape_extent(kind, params), resolution)
    if form is ShapeForm.MASK2D:
        x, y = np.meshgrid(coords, coords, indexing="xy")
        vox = inside(x, y, np.zeros_like(x))
        return Mask2D(voxels=vox, spacing_mm=(resolution, resolution)), truth
    z, y, x = np.meshgrid(coords, coords, coords, indexing="ij")
    vox = inside(x, y, z)
    return Mask3D(voxels=vox, spacing_mm=(resolution, resolution, resolution)), truth


# ---------------------------------------------------------------------------
# cohorts

@dataclass(frozen=True)
class CohortSpec:
    """Recipe for a synthetic cohort.

    effect_sizes maps a feature name to a standardized mean shift between
    the classes (CompleteOcclusion minus PartialOcclusion).  Clinical
    numerics (age, height_cm, weight_kg, hunt_hess, nihss, mrs) shift
    directly; imaging names act on latent shape parameters:

      volume_cm3      -> sac radius latent (scales volume, areas, dims)
      nsi             -> surface-irregularity latent (moves nsi/ipr with
                         little trace in the 2D dimensions)
      left_angle_deg  -> left daughter angle latent
      right_angle_deg -> right daughter angle latent
      parent_diam_mm  -> parent vessel diameter latent

    Realized imaging shifts are therefore monotone in the request rather
    than exactly the requested value.  condition_prevalences maps a
    condition name to (p_co, p_po); each class realizes round(p * n)
    carriers chosen uniformly, so the per-class prevalence is exact up to
    rounding rather than binomially noisy.
    """

    n_co: int
    n_po: int
    effect_sizes: dict = field(default_factory=dict)
    missing_rate: float = 0.0
    condition_prevalences: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.n_co < 1 or self.n_po < 1:
            raise SynthError(
                f"class counts must be >= 1, got n_co={self.n_co}, n_po={self.n_po}"
            )
        if not (0.0 <= self.missing_rate < 1.0):
            raise SynthError(
                f"missing_rate must be in [0, 1), got {self.missing_rate}"
            )
        for name, pair in self.condition_prevalences.items():
            p_co, p_po = pair
            if not (0.0 <= p_co <= 1.0 and 0.0 <= p_po <= 1.0):
                raise SynthError(f"prevalences for {name!r} must be in [0, 1]")


@dataclass(frozen=True)
class GeneratedCohort:
    records: tuple  # of (ClinicalRecord, OcclusionLabel)
    bundles: dict  # case_id -> AnnotationBundle
    effects: dict  # planted ground truth, keyed like CohortSpec.effect_sizes


_CLINICAL_BASELINES = {
    "age": (57.0, 12.0),
    "height_cm": (168.0, 10.0),
    "weight_kg": (79.0, 16.0),
    "hunt_hess": (1.2, 1.2),
    "nihss": (2.0, 3.0),
    "mrs": (1.0, 1.0),
}

#  the nsi effect rides on surface irregularity rather than elongation:
#  projections barely see it, so the 3D features carry signal the 2D
#  dimensions cannot substitute for
_LATENT_BASELINES = {
    "volume_cm3": ("radius", 4.0, 0.45),
    "nsi": ("irregularity", 0.22, 0.06),
    "left_angle_deg": ("left_angle", 124.0, 9.0),
    "right_angle_deg": ("right_angle", 121.0, 9.0),
    "parent_diam_mm": ("parent_diam", 3.2, 0.35),
}

_RACES = ("White", "Black", "Asian", "Other")
_ALLERGY_POOL = ("Penicillin", "Sulfa", "Latex", "Iodine", "Aspirin", "Codeine")
_MEDICATION_POOL = (
    "Aspirin",
    "Atorvastatin",
    "Lisinopril",
    "Metformin",
    "Levothyroxine",
    "Amlodipine",
    "Omeprazole",
    "Sertraline",
)


def _draw_clip(rng, mean, sd, lo, hi, as_int=False):
    v = rng.normal(mean, sd)
    v = min(max(v, lo), hi)
    if as_int:
        return int(round(v))
    return float(v)


def _case_latents(rng, is_co, effects):
    out = {}
    for key, (name, mean, sd) in _LATENT_BASELINES.items():
        shift = float(effects.get(key, 0.0)) if is_co else 0.0
        out[name] = rng.normal(mean + shift * sd, sd)
    out["radius"] = max(out["radius"], 1.5)
    out["irregularity"] = min(max(out["irregularity"], 0.0), 0.35)
    out["left_angle"] = min(max(out["left_angle"], 30.0), 175.0)
    out["right_angle"] = min(max(out["right_angle"], 30.0), 175.0)
    out["parent_diam"] = max(out["parent_diam"], 1.0)
    out["elongation"] = max(rng.normal(1.35, 0.10), 0.8)
    return out


def _case_bundle(rng, case_id, lat):
    r = lat["radius"]
    a = r
    b = r * (1.0 + rng.normal(0.0, 0.05))
    c = r * lat["elongation"]
    b = max(b, 1.0)

    def noisy(v):
        return max(float(v * (1.0 + rng.normal(0.0, 0.02))), 0.1)

    neck_ratio = min(max(rng.normal(0.62, 0.06), 0.3), 0.95)
    meas = {
        View.AP: Measurement2D(
            view=View.AP,
            height_mm=noisy(2 * c),
            width_mm=noisy(2 * a),
            dome_mm=noisy(2 * max(a, b, c)),
            neck_mm=noisy(neck_ratio * 2 * a),
        ),
        View.LATERAL: Measurement2D(
            view=View.LATERAL,
            height_mm=noisy(2 * c),
            width_mm=noisy(2 * b),
            dome_mm=noisy(2 * max(a, b, c)),
            neck_mm=noisy(neck_ratio * 2 * b),
        ),
    }

    spacing = (0.35, 0.35)
    th = np.linspace(0.0, 2.0 * np.pi, 40, endpoint=False)

    def ellipse_px(sa, sb):
        cx, cy = 64.0, 64.0
        return Contour2D(
            points=np.column_stack(
                [cx + sa / spacing[0] * np.cos(th), cy + sb / spacing[1] * np.sin(th)]
            )
        )

    contours = {
        View.AP: (ellipse_px(a, c), spacing),
        View.LATERAL: (ellipse_px(b, c), spacing),
    }

    # daughters leave the bifurcation at the planted angles from the
    # parent's away direction (-y here, since the parent runs upward)
    def daughter(angle_deg, sign):
        alpha = math.radians(180.0 - angle_deg)
        d = np.array([sign * math.sin(alpha), math.cos(alpha)])
        start = rng.normal(0.0, 0.3, 2)
        return (tuple(start), tuple(start + 9.0 * d))

    vessel = VesselAnnotation(
        parent_seg=((rng.normal(0.0, 0.3), -10.0), (0.0, 0.0)),
        left_seg=daughter(lat["left_angle"], -1.0),
        right_seg=daughter(lat["right_angle"], +1.0),
        parent_diam_mm=lat["parent_diam"],
        left_diam_mm=max(rng.normal(0.72, 0.06), 0.3) * lat["parent_diam"],
        right_diam_mm=max(rng.normal(0.66, 0.06), 0.3) * lat["parent_diam"],
    )

    # surface irregularity: a smooth star-shaped radial modulation the
    # 2D dimension measurements cannot see
    modulation = _blob_radius_field(
        1.0, lat["irregularity"], int(rng.integers(2**31)), freq=(4.0, 8.0)
    )
    dz = 2.0 * c / 16
    slices = []
    for i in range(16):
        z = -c + (i + 0.5) * dz
        s = math.sqrt(max(1.0 - (z / c) ** 2, 0.0))
        if a * s < 0.05:
            continue
        phase = rng.normal(0.0, 0.15)
        pts = np.column_stack(
            [a * s * np.cos(th + phase), b * s * np.sin(th + phase)]
        )
        norms = np.sqrt(pts[:, 0] ** 2 + pts[:, 1] ** 2 + z * z)
        u = np.column_stack([pts / norms[:, None], np.full(len(pts), z) / norms])
        pts = pts * modulation(u)[:, None]
        slices.append((z, Contour2D(points=pts)))
    stack = ContourStack3D(slices=tuple(slices))

    return AnnotationBundle(
        case_id=case_id,
        measurements=meas,
        vessel=vessel,
        contours_2d=contours,
        contour_stack_3d=stack,
    )


def _apply_measurement_missing(rng, bundle, rate):
    if rate <= 0.0:
        return bundle
    meas = {}
    for view, m in bundle.measurements.items():
        kept = {}
        for name in ("height_mm", "width_mm", "dome_mm", "neck_mm"):
            val = getattr(m, name)
            kept[name] = None if rng.random() < rate else val
        if any(v is not None for v in kept.values()):
            meas[view] = Measurement2D(view=view, **kept)
    return AnnotationBundle(
        case_id=bundle.case_id,
        measurements=meas,
        vessel=bundle.vessel,
        contours_2d=bundle.contours_2d,
        contour_stack_3d=bundle.contour_stack_3d,
    )


def gen_cohort(spec, vocab=None):
    """Generate records, annotation bundles, and the planted effect map.

    Clinical numerics follow class-conditional Gaussians with the
    requested standardized shifts; listed conditions are realized with
    exact per-class counts round(p * n); missingness hits optional
    clinical fields and 2D measurement entries independently at
    missing_rate.  Contours, stacks, and vessels stay present so the
    imaging pipeline always has input.  Deterministic per seed.
    """
    vocab = vocab or ConditionVocabulary.default()
    for name in spec.condition_prevalences:
        if name not in vocab.conditions:
            raise SynthError(f"condition {name!r} not in the vocabulary")

    rng = np.random.default_rng(spec.seed)
    n = spec.n_co + spec.n_po
    labels = [OcclusionLabel.COMPLETE_OCCLUSION] * spec.n_co + [
        OcclusionLabel.PARTIAL_OCCLUSION
    ] * spec.n_po

    condition_sets = [set() for _ in range(n)]
    for name in sorted(spec.condition_prevalences):
        p_co, p_po = spec.condition_prevalences[name]
        k_co = int(round(p_co * spec.n_co))
        k_po = int(round(p_po * spec.n_po))
        for idx in rng.choice(spec.n_co, size=k_co, replace=False):
            condition_sets[idx].add(name)
        for idx in rng.choice(spec.n_po, size=k_po, replace=False):
            condition_sets[spec.n_co + idx].add(name)

    records = []
    bundles = {}
    rate = spec.missing_rate

    def masked(value):
        return None if (rate > 0.0 and rng.random() < rate) else value

    for i in range(n):
        case_id = f"S{i + 1:04d}"
        is_co = labels[i] is OcclusionLabel.COMPLETE_OCCLUSION

        def numeric(field_name, lo, hi, as_int=False):
            mean, sd = _CLINICAL_BASELINES[field_name]
            shift = float(spec.effect_sizes.get(field_name, 0.0)) if is_co else 0.0
            return _draw_clip(rng, mean + shift * sd, sd, lo, hi, as_int=as_int)

        rec = ClinicalRecord(
            case_id=case_id,
            age=masked(numeric("age", 18, 95)),
            gender=masked(Gender.F if rng.random() < 0.72 else Gender.M),
            height_cm=masked(numeric("height_cm", 140, 205)),
            weight_kg=masked(numeric("weight_kg", 40, 180)),
            race=masked(str(rng.choice(_RACES, p=(0.62, 0.2, 0.1, 0.08)))),
            aneurysm_location=masked(
                list(AneurysmLocation)[
                    rng.choice(4, p=(0.33, 0.22, 0.18, 0.27))
                ]
            ),
            side=masked(list(Side)[rng.choice(3, p=(0.42, 0.42, 0.16))]),
            rupture_status=masked(
                RuptureStatus.RUPTURED
                if rng.random() < 0.35
                else RuptureStatus.UNRUPTURED
            ),
            detection=masked(
                Detection.SYMPTOMATIC if rng.random() < 0.4 else Detection.INCIDENTAL
            ),
            hunt_hess=masked(numeric("hunt_hess", 0, 5, as_int=True)),
            nihss=masked(numeric("nihss", 0, 30, as_int=True)),
            mrs=masked(numeric("mrs", 0, 6, as_int=True)),
            smoking_history=masked(bool(rng.random() < 0.45)),
            substance_abuse=masked(bool(rng.random() < 0.12)),
            conditions=frozenset(condition_sets[i]),
            allergies=tuple(
                sorted(
                    rng.choice(
                        _ALLERGY_POOL,
                        size=min(rng.poisson(0.8), len(_ALLERGY_POOL)),
                        replace=False,
                    ).tolist()
                )
            ),
            medications=tuple(
                sorted(
                    rng.choice(
                        _MEDICATION_POOL,
                        size=min(rng.poisson(2.0), len(_MEDICATION_POOL)),
                        replace=False,
                    ).tolist()
                )
            ),
        )
        records.append((rec, labels[i]))

        lat = _case_latents(rng, is_co, spec.effect_sizes)
        bundle = _case_bundle(rng, case_id, lat)
        bundles[case_id] = _apply_measurement_missing(rng, bundle, rate)

    return GeneratedCohort(
        records=tuple(records),
        bundles=bundles,
        effects=dict(spec.effect_sizes),
    )


def default_cohort_spec(seed=0, missing_rate=0.10):
    """The desk-scale cohort: 49/32 with planted imaging effects.

    Clinical shifts are mild while the imaging latents carry most of the
    signal, so richer feature sets outperform the clinical-only set.
    """
    return CohortSpec(
        n_co=49,
        n_po=32,
        effect_sizes={
            "age": -0.25,
            "volume_cm3": -1.1,
            "nsi": -1.8,
            "left_angle_deg": 0.5,
        },
        missing_rate=missing_rate,
        condition_prevalences={
            "Hypertension": (0.57, 0.59),
            "Migraines": (0.57, 0.44),
        },
        seed=seed,
    )


# ---------------------------------------------------------------------------
# segmentation corpus

def _render_intensity(mask_bool, rng, noise_sd=14.0, blur_sigma=1.3):
    img = np.where(mask_bool, 185.0, 42.0)
    img = ndimage.gaussian_filter(img, sigma=blur_sigma)
    img = img + rng.normal(0.0, noise_sd, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def _random_blob_mask_2d(rng, size, spacing):
    ny, nx = size
    r = rng.uniform(0.22, 0.34) * min(nx, ny) * spacing
    amp = rng.uniform(0.08, 0.28)
    radius_fn = _blob_radius_field(r, amp, int(rng.integers(2**31)))
    cx = (0.5 + rng.uniform(-0.08, 0.08)) * nx * spacing
    cy = (0.5 + rng.uniform(-0.08, 0.08)) * ny * spacing
    xs = (np.arange(nx) + 0.5) * spacing - cx
    ys = (np.arange(ny) + 0.5) * spacing - cy
    x, y = np.meshgrid(xs, ys)
    z = np.zeros_like(x)
    d = np.sqrt(x * x + y * y)
    d_safe = np.where(d == 0, 1.0, d)
    u = np.stack([x / d_safe, y / d_safe, z], axis=-1)
    return (d <= np.where(d == 0, np.inf, radius_fn(u))).astype(bool)


def _random_blob_mask_3d(rng, size, spacing):
    nz, ny, nx = size
    r = rng.uniform(0.24, 0.34) * min(nx, ny, nz) * spacing
    amp = rng.uniform(0.08, 0.25)
    radius_fn = _blob_radius_field(r, amp, int(rng.integers(2**31)))
    center = (
        (0.5 + rng.uniform(-0.06, 0.06, 3))
        * np.array([nx, ny, nz])
        * spacing
    )
    xs = (np.arange(nx) + 0.5) * spacing - center[0]
    ys = (np.arange(ny) + 0.5) * spacing - center[1]
    zs = (np.arange(nz) + 0.5) * spacing - center[2]
    z, y, x = np.meshgrid(zs, ys, xs, indexing="ij")
    d = np.sqrt(x * x + y * y + z * z)
    d_safe = np.where(d == 0, 1.0, d)
    u = np.stack([x / d_safe, y / d_safe, z / d_safe], axis=-1)
    return (d <= np.where(d == 0, np.inf, radius_fn(u))).astype(bool)


def gen_seg_corpus_2d(out_dir, n_images=60, size=(128, 128), spacing=0.35,
                      k_folds=5, seed=0, include_empty=1):
    """Write a 2D blob corpus: intensity PGMs, gt masks, and a manifest.

    include_empty all-background images exercise the empty-prediction
    path.  Returns the manifest path.
    """
    rng = np.random.default_rng(seed)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    cases = []
    for i in range(n_images):
        case_id = f"blob2d_{i:03d}"
        if i < n_images - include_empty:
            vox = _random_blob_mask_2d(rng, size, spacing)
        else:
            vox = np.zeros(size, dtype=bool)
        mask = Mask2D(voxels=vox, spacing_mm=(spacing, spacing))
        img = _render_intensity(vox, rng)
        image_rel = f"images/{case_id}.pgm"
        mask_rel = f"masks/{case_id}.pgm"
        write_gray_pgm(os.path.join(out_dir, image_rel), img, (spacing, spacing))
        write_mask_2d(os.path.join(out_dir, mask_rel), mask)
        cases.append(
            SegCase(
                case_id=case_id,
                image=image_rel,
                mask_gt=mask_rel,
                split=f"fold{i % k_folds}",
            )
        )
    manifest_path = os.path.join(out_dir, "manifest.json")
    write_manifest(manifest_path, SegManifest(cases=tuple(cases), base_dir=out_dir))
    return manifest_path


def gen_seg_corpus_3d(out_dir, n_volumes=40, size=(32, 48, 48), spacing=0.5,
                      k_folds=5, seed=0):
    """Write a 3D blob corpus: raw intensity volumes, gt masks, manifest."""
    rng = np.random.default_rng(seed)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    cases = []
    for i in range(n_volumes):
        case_id = f"blob3d_{i:03d}"
        vox = _random_blob_mask_3d(rng, size, spacing)
        mask = Mask3D(voxels=vox, spacing_mm=(spacing, spacing, spacing))
        img = _render_intensity(vox, rng)
        image_rel = f"images/{case_id}.raw"
        mask_rel = f"masks/{case_id}.raw"
        write_gray_raw(
            os.path.join(out_dir, image_rel), img, (spacing, spacing, spacing)
        )
        write_mask_3d(os.path.join(out_dir, mask_rel), mask)
        cases.append(
            SegCase(
                case_id=case_id,
                image=image_rel,
                mask_gt=mask_rel,
                split=f"fold{i % k_folds}",
            )
        )
    manifest_path = os.path.join(out_dir, "manifest.json")
    write_manifest(manifest_path, SegManifest(cases=tuple(cases), base_dir=out_dir))
    return manifest_path
