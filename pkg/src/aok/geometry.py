"""2D and 3D sac morphometry.

Areas from contours and masks, bifurcation angles and vessel ratios,
contour-stack lofting into a closed triangle mesh, volume/surface/shape
indices, and the device-undersizing gap.

Shape indices follow the published formulas verbatim: with volume V and
surface S,

    IPR = S / V^(2/3)
    NSI = 1 - (18*pi)^(1/3) * V^(2/3) / S

Under this constant a perfect sphere scores NSI ~= 0.2063 (not 0) and
IPR = (36*pi)^(1/3) ~= 4.8360; both are the correct anchors to compare
against.  Lengths are mm throughout; reported volume/surface are cm^3
and cm^2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import ndimage

from aok.core import Contour2D, ContourStack3D, CoreError, SacMesh

SPHERE_IPR = (36.0 * math.pi) ** (1.0 / 3.0)  # ~4.8360
SPHERE_NSI = 1.0 - 2.0 ** (-1.0 / 3.0)  # ~0.2063
_NSI_CONST = (18.0 * math.pi) ** (1.0 / 3.0)


class GeometryError(ValueError):
    """Geometric precondition violated."""


# ---------------------------------------------------------------------------
# result types

@dataclass(frozen=True)
class AngleMeasure:
    """Bifurcation angles in degrees, with their /180 normalizations."""

    left_angle_deg: float
    right_angle_deg: float
    normalized_left: float
    normalized_right: float

    def __post_init__(self):
        for name in ("left_angle_deg", "right_angle_deg"):
            a = getattr(self, name)
            if not (0.0 < a <= 180.0):
                raise GeometryError(f"{name} out of (0, 180]: {a}")
        if self.normalized_left != self.left_angle_deg / 180.0:
            raise GeometryError("normalized_left must equal left_angle_deg/180")
        if self.normalized_right != self.right_angle_deg / 180.0:
            raise GeometryError("normalized_right must equal right_angle_deg/180")


@dataclass(frozen=True)
class ShapeMetrics3D:
    """Volume, surface, and the two shape indices of a closed sac mesh."""

    volume_cm3: float
    surface_cm2: float
    nsi: float
    ipr: float

    def __post_init__(self):
        if not (self.volume_cm3 > 0 and self.surface_cm2 > 0):
            raise GeometryError("volume and surface must be positive")
        if self.ipr < SPHERE_IPR * (1.0 - 1e-6):
            raise GeometryError(
                f"ipr {self.ipr} below the spherical minimum {SPHERE_IPR}"
            )
        ident = 1.0 - _NSI_CONST / self.ipr
        if abs(self.nsi - ident) > 1e-12 * max(1.0, abs(ident)):
            raise GeometryError("nsi and ipr are not algebraically consistent")


# ---------------------------------------------------------------------------
# areas

def polygon_area(contour, spacing_mm=(1.0, 1.0)):
    """Area enclosed by a contour, in mm^2 (shoelace, winding-independent).

    Points are scaled per-axis by spacing_mm before integration, so
    contours stored in pixel units can be passed with their pixel pitch.
    """
    sx, sy = spacing_mm
    if not (sx > 0 and sy > 0):
        raise GeometryError(f"spacing must be positive, got {spacing_mm}")
    pts = np.asarray(contour.points, dtype=float) * (sx, sy)
    x, y = pts[:, 0], pts[:, 1]
    return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))) / 2.0


def mask_area(mask):
    """Foreground area of a 2D mask in mm^2 (count times pixel area)."""
    count = mask.foreground_count
    if count == 0:
        raise GeometryError("mask has no foreground pixels")
    sx, sy = mask.spacing_mm
    return count * sx * sy


# ---------------------------------------------------------------------------
# vessel geometry

def _bifurcation(v, snap_radius_mm):
    """Pick one endpoint per segment minimizing summed pairwise distance.

    Returns (bifurcation_point, {segment_name: direction_away}) or raises
    when the best triple spreads wider than the snap radius.
    """
    segs = {
        "parent": np.asarray(v.parent_seg, dtype=float),
        "left": np.asarray(v.left_seg, dtype=float),
        "right": np.asarray(v.right_seg, dtype=float),
    }
    best = None
    for ip in (0, 1):
        for il in (0, 1):
            for ir in (0, 1):
                p = segs["parent"][ip]
                l = segs["left"][il]
                r = segs["right"][ir]
                spread = (
                    np.linalg.norm(p - l)
                    + np.linalg.norm(p - r)
                    + np.linalg.norm(l - r)
                )
                if best is None or spread < best[0]:
                    best = (spread, (ip, il, ir))
    _, (ip, il, ir) = best
    chosen = {
        "parent": (segs["parent"][ip], segs["parent"][1 - ip]),
        "left": (segs["left"][il], segs["left"][1 - il]),
        "right": (segs["right"][ir], segs["right"][1 - ir]),
    }
    near = np.array([chosen[k][0] for k in ("parent", "left", "right")])
    pairwise_max = max(
        np.linalg.norm(near[0] - near[1]),
        np.linalg.norm(near[0] - near[2]),
        np.linalg.norm(near[1] - near[2]),
    )
    if pairwise_max > snap_radius_mm:
        raise GeometryError(
            f"no bifurcation: nearest segment endpoints spread {pairwise_max:.3f} mm, "
            f"beyond the {snap_radius_mm} mm snap radius"
        )
    directions = {}
    for name, (near_pt, far_pt) in chosen.items():
        d = far_pt - near_pt
        directions[name] = d / np.linalg.norm(d)
    return near.mean(axis=0), directions


def vessel_angles(v, snap_radius_mm=5.0):
    """Angles between the parent vessel and each daughter at the bifurcation.

    All three directions point away from the bifurcation (the mutually
    nearest endpoints of the three segments), so a daughter continuing
    straight past the parent reads 180 degrees.
    """
    _, dirs = _bifurcation(v, snap_radius_mm)

    def angle(u, w):
        return math.degrees(math.acos(float(np.clip(np.dot(u, w), -1.0, 1.0))))

    left = angle(dirs["parent"], dirs["left"])
    right = angle(dirs["parent"], dirs["right"])
    return AngleMeasure(
        left_angle_deg=left,
        right_angle_deg=right,
        normalized_left=left / 180.0,
        normalized_right=right / 180.0,
    )


def vessel_ratios(v):
    """Diameter ratios; any ratio with a missing input is None, never 0.

    Keys: left_over_parent, right_over_parent, larger_over_parent,
    left_over_right.  The larger daughter is taken over whichever
    daughter diameters are present.
    """
    p, l, r = v.parent_diam_mm, v.left_diam_mm, v.right_diam_mm
    daughters = [d for d in (l, r) if d is not None]
    return {
        "left_over_parent": (l / p) if (l is not None and p is not None) else None,
        "right_over_parent": (r / p) if (r is not None and p is not None) else None,
        "larger_over_parent": (max(daughters) / p)
        if (daughters and p is not None)
        else None,
        "left_over_right": (l / r) if (l is not None and r is not None) else None,
    }


# ---------------------------------------------------------------------------
# lofting

def _resample_ring(contour, n):
    """Resample a closed contour to n points uniformly spaced by arc length."""
    pts = np.asarray(contour.points, dtype=float)
    closed = np.vstack([pts, pts[:1]])
    seg = np.diff(closed, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    targets = np.arange(n) * (total / n)
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(seg_len) - 1)
    frac = (targets - cum[idx]) / np.where(seg_len[idx] > 0, seg_len[idx], 1.0)
    return closed[idx] + seg[idx] * frac[:, None]


def _ring_signed_area(ring):
    x, y = ring[:, 0], ring[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0


def _align_ring(prev_ring, ring):
    """Cyclic offset of ring minimizing summed squared distance to prev_ring."""
    n = len(ring)
    best_off, best_cost = 0, None
    for off in range(n):
        cost = float(np.sum((np.roll(ring, -off, axis=0) - prev_ring) ** 2))
        if best_cost is None or cost < best_cost:
            best_off, best_cost = off, cost
    return np.roll(ring, -best_off, axis=0)


def loft_mesh(stack, ring_samples=64):
    """Loft a contour stack into a closed triangle mesh.

    Each contour is resampled to ring_samples points by arc length and
    normalized counterclockwise; consecutive rings are registered by the
    rotational offset with minimal summed point distance (minimal twist),
    stitched with triangle strips, and the end rings are capped with
    centroid fans.  The result satisfies every SacMesh invariant.
    """
    if ring_samples < 3:
        raise GeometryError(f"ring_samples must be >= 3, got {ring_samples}")
    if len(stack) < 2:
        raise GeometryError("lofting needs >= 2 slices")

    rings = []
    for z, contour in stack.slices:
        area = abs(_ring_signed_area(np.asarray(contour.points, dtype=float)))
        if area < 1e-9:
            raise GeometryError(f"degenerate contour at z={z} (area {area} mm^2)")
        ring = _resample_ring(contour, ring_samples)
        if _ring_signed_area(ring) < 0:
            ring = ring[::-1]
        rings.append((z, ring))

    aligned = [rings[0][1]]
    for _, ring in rings[1:]:
        aligned.append(_align_ring(aligned[-1], ring))

    n = ring_samples
    verts = []
    for (z, _), ring in zip(rings, aligned):
        verts.append(np.column_stack([ring, np.full(n, z)]))
    bottom_centroid = verts[0].mean(axis=0)
    top_centroid = verts[-1].mean(axis=0)
    vertices = np.vstack(verts + [bottom_centroid[None, :], top_centroid[None, :]])
    cb = len(vertices) - 2
    ct = len(vertices) - 1

    tris = []
    k = np.arange(n)
    k1 = (k + 1) % n
    for r in range(len(rings) - 1):
        a, b = r * n, (r + 1) * n
        tris.append(np.column_stack([a + k, a + k1, b + k1]))
        tris.append(np.column_stack([a + k, b + k1, b + k]))
    tris.append(np.column_stack([np.full(n, cb), k1, k]))
    last = (len(rings) - 1) * n
    tris.append(np.column_stack([np.full(n, ct), last + k, last + k1]))
    triangles = np.vstack(tris)

    try:
        return SacMesh(vertices=vertices, triangles=triangles)
    except CoreError as exc:
        raise GeometryError(f"lofted mesh invalid: {exc}") from None


# ---------------------------------------------------------------------------
# mesh metrics

def mesh_metrics(mesh):
    """Volume, surface, NSI, and IPR of a closed mesh; cm^3 and cm^2 out."""
    v_cm3 = mesh.volume_mm3 / 1000.0
    s_cm2 = mesh.surface_mm2 / 100.0
    ipr = s_cm2 / v_cm3 ** (2.0 / 3.0)
    nsi = 1.0 - _NSI_CONST / ipr
    return ShapeMetrics3D(volume_cm3=v_cm3, surface_cm2=s_cm2, nsi=nsi, ipr=ipr)


# ---------------------------------------------------------------------------
# mask -> contour stack

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)

# crack-edge emission per background neighbor, in corner-grid coordinates:
# (row offset of corner start, col offset, row offset of corner end, col offset)
_EDGE_RULES = (
    ((-1, 0), (0, 0), (0, 1)),  # background north: walk east along the top
    ((0, 1), (0, 1), (1, 1)),  # background east: walk south along the right
    ((1, 0), (1, 1), (1, 0)),  # background south: walk west along the bottom
    ((0, -1), (1, 0), (0, 0)),  # background west: walk north along the left
)


def _slice_boundary(fg, sx, sy):
    """Pixel-edge (crack) boundary polygon of a single-component slice.

    Walks the directed crack edges between foreground and background;
    the enclosed shoelace area equals foreground_count*sx*sy exactly,
    keeping contour-derived and pixel-count areas consistent.  Corners
    sit at pixel borders, half a pixel off the centers.
    """
    rows, cols = np.nonzero(fg)
    padded = np.zeros((fg.shape[0] + 2, fg.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = fg

    out_edges = {}
    for i, j in zip(rows + 1, cols + 1):
        for (di, dj), (si, sj), (ei, ej) in _EDGE_RULES:
            if not padded[i + di, j + dj]:
                start = (i + si, j + sj)
                end = (i + ei, j + ej)
                out_edges.setdefault(start, []).append(end)

    n_edges = sum(len(v) for v in out_edges.values())
    start = min(out_edges)
    walk = [start]
    prev_dir = None
    current = start
    used = 0
    while True:
        options = out_edges[current]
        if len(options) == 1 or prev_dir is None:
            nxt = options[-1]
        else:
            # pinch corner: keep the turn that separates the two lobes
            best = None
            for cand in options:
                d = (cand[0] - current[0], cand[1] - current[1])
                cross = prev_dir[0] * d[1] - prev_dir[1] * d[0]
                if best is None or cross > best[0]:
                    best = (cross, cand)
            nxt = best[1]
        options.remove(nxt)
        if not options:
            del out_edges[current]
        used += 1
        prev_dir = (nxt[0] - current[0], nxt[1] - current[1])
        if nxt == start:
            break
        walk.append(nxt)
        current = nxt

    if used != n_edges:
        raise GeometryError(
            "slice boundary is not a single closed curve (hole or pinch point)"
        )

    poly = np.asarray(walk, dtype=float)
    # collapse staircase runs: drop points collinear with their neighbors
    d_prev = poly - np.roll(poly, 1, axis=0)
    d_next = np.roll(poly, -1, axis=0) - poly
    turning = d_prev[:, 0] * d_next[:, 1] - d_prev[:, 1] * d_next[:, 0] != 0
    poly = poly[turning]
    # undo the padding offset; pixel centers sit at integer multiples of spacing
    return np.column_stack([(poly[:, 1] - 1.5) * sx, (poly[:, 0] - 1.5) * sy])


def mask_to_stack(mask, largest_component=False):
    """Extract per-slice boundary contours from a 3D mask.

    Empty slices are skipped; z comes from slice index times sz.  A slice
    whose foreground splits into several 4-connected components is an
    error listing the offending slice indices, unless largest_component
    keeps only the biggest piece per slice.
    """
    if mask.foreground_count == 0:
        raise GeometryError("mask has no foreground voxels")
    sx, sy, sz = mask.spacing_mm

    slices = []
    multi = []
    for index in range(mask.voxels.shape[0]):
        fg = mask.voxels[index]
        if not fg.any():
            continue
        labels, n_comp = ndimage.label(fg, structure=_FOUR_CONN)
        if n_comp > 1:
            if largest_component:
                sizes = ndimage.sum_labels(fg, labels, np.arange(1, n_comp + 1))
                fg = labels == (1 + int(np.argmax(sizes)))
            else:
                multi.append(index)
                continue
        if not multi:
            points = _slice_boundary(fg, sx, sy)
            slices.append((index * sz, Contour2D(points=points)))
    if multi:
        raise GeometryError(
            f"slices {multi} have multiple 4-connected components; "
            "pass largest_component=True to keep the biggest"
        )
    try:
        return ContourStack3D(slices=tuple(slices))
    except CoreError as exc:
        raise GeometryError(str(exc)) from None


# ---------------------------------------------------------------------------
# device sizing

def device_gap(sac_volume_cm3, device_volume_cm3):
    """Sac minus device volume in cm^3; positive means the device is undersized."""
    if not (sac_volume_cm3 > 0 and device_volume_cm3 > 0):
        raise GeometryError("volumes must be positive")
    return sac_volume_cm3 - device_volume_cm3


def load_device_catalog(path=None):
    """Device model -> nominal expanded volume (cm^3); packaged default."""
    if path is None:
        text = resources.files("aok").joinpath("data/device_catalog.json").read_text()
        doc = json.loads(text)
    else:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    catalog = {}
    for entry in doc["devices"]:
        catalog[entry["model"]] = float(entry["expanded_volume_cm3"])
    return catalog
