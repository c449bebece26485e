import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aok.core import (
    Contour2D,
    ContourStack3D,
    Mask2D,
    Mask3D,
    SacMesh,
    VesselAnnotation,
)
from aok.geometry import (
    GeometryError,
    SPHERE_IPR,
    SPHERE_NSI,
    device_gap,
    load_device_catalog,
    loft_mesh,
    mask_area,
    mask_to_stack,
    mesh_metrics,
    polygon_area,
    vessel_angles,
    vessel_ratios,
)

from oracles import mc_polygon_area


def _cube_mesh(side=2.0):
    v = np.array(
        [
            [0, 0, 0], [side, 0, 0], [side, side, 0], [0, side, 0],
            [0, 0, side], [side, 0, side], [side, side, side], [0, side, side],
        ],
        dtype=float,
    )
    t = np.array(
        [
            [0, 2, 1], [0, 3, 2],
            [4, 5, 6], [4, 6, 7],
            [0, 1, 5], [0, 5, 4],
            [2, 3, 7], [2, 7, 6],
            [0, 4, 7], [0, 7, 3],
            [1, 2, 6], [1, 6, 5],
        ]
    )
    return SacMesh(vertices=v, triangles=t)


def _sphere_stack(r=10.0, n_slices=40, n_pts=72):
    slices = []
    for i in range(n_slices):
        z = -r + (i + 0.5) * 2 * r / n_slices
        rho = math.sqrt(max(r * r - z * z, 0.0))
        th = np.linspace(0, 2 * math.pi, n_pts, endpoint=False)
        pts = np.stack([rho * np.cos(th), rho * np.sin(th)], axis=1)
        slices.append((z, Contour2D(points=pts)))
    return ContourStack3D(slices=tuple(slices))


def _scaled_stack(stack, k):
    return ContourStack3D(
        slices=tuple(
            (z * k, Contour2D(points=c.points * k)) for z, c in stack.slices
        )
    )


def test_polygon_area_square_and_spacing():
    sq = Contour2D(points=np.array([[0, 0], [4, 0], [4, 4], [0, 4]], dtype=float))
    assert polygon_area(sq) == pytest.approx(16.0)
    assert polygon_area(sq, (0.5, 0.5)) == pytest.approx(4.0)
    assert polygon_area(sq, (2.0, 0.25)) == pytest.approx(8.0)


def test_polygon_area_orientation_free():
    tri = np.array([[0, 0], [3, 0], [0, 4]], dtype=float)
    cw = Contour2D(points=tri[::-1].copy())
    assert polygon_area(Contour2D(points=tri)) == pytest.approx(6.0)
    assert polygon_area(cw) == pytest.approx(6.0)


def test_polygon_area_matches_monte_carlo(rng):
    th = np.sort(rng.uniform(0, 2 * math.pi, 17))
    rad = rng.uniform(2.0, 6.0, 17)
    pts = np.stack([10 + rad * np.cos(th), 10 + rad * np.sin(th)], axis=1)
    area = polygon_area(Contour2D(points=pts))
    est = mc_polygon_area(pts, n_samples=400_000, seed=1)
    assert abs(area - est) / est < 0.02


@settings(max_examples=40, deadline=None)
@given(
    dx=st.floats(-50, 50), dy=st.floats(-50, 50),
    angle=st.floats(0, 2 * math.pi), k=st.floats(0.1, 20),
)
def test_polygon_area_invariances(dx, dy, angle, k):
    rng = np.random.default_rng(3)
    th = np.sort(rng.uniform(0, 2 * math.pi, 11))
    rad = rng.uniform(1.0, 4.0, 11)
    pts = np.stack([rad * np.cos(th), rad * np.sin(th)], axis=1)
    base = polygon_area(Contour2D(points=pts))
    shifted = polygon_area(Contour2D(points=pts + np.array([dx, dy])))
    rot = np.array(
        [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
    )
    rotated = polygon_area(Contour2D(points=pts @ rot.T))
    scaled = polygon_area(Contour2D(points=pts * k))
    assert shifted == pytest.approx(base, rel=1e-9, abs=1e-7)
    assert rotated == pytest.approx(base, rel=1e-9)
    assert scaled == pytest.approx(base * k * k, rel=1e-9)


def test_mask_area_counts_spacing():
    m = Mask2D(voxels=np.ones((3, 5), dtype=bool), spacing_mm=(2.0, 1.0))
    assert mask_area(m) == pytest.approx(30.0)


def test_cube_mesh_metrics_exact():
    m = mesh_metrics(_cube_mesh(side=2.0))
    assert m.volume_cm3 == pytest.approx(0.008, abs=1e-12)
    assert m.surface_cm2 == pytest.approx(0.24, abs=1e-12)
    assert m.ipr == pytest.approx(24.0 / 8.0 ** (2 / 3), rel=1e-12)


def test_sphere_stack_near_sphere_constants():
    metrics = mesh_metrics(loft_mesh(_sphere_stack()))
    truth_v = 4.18879
    assert abs(metrics.volume_cm3 - truth_v) / truth_v < 0.02
    assert abs(metrics.ipr - SPHERE_IPR) / SPHERE_IPR < 0.01
    assert abs(metrics.nsi - SPHERE_NSI) < 0.01


def test_nsi_ipr_scale_invariant():
    stack = _sphere_stack(r=4.0, n_slices=16, n_pts=40)
    base = mesh_metrics(loft_mesh(stack))
    for k in (0.5, 2.0, 10.0):
        m = mesh_metrics(loft_mesh(_scaled_stack(stack, k)))
        assert m.nsi == pytest.approx(base.nsi, abs=1e-9)
        assert m.ipr == pytest.approx(base.ipr, rel=1e-9)
        assert m.volume_cm3 == pytest.approx(base.volume_cm3 * k ** 3, rel=1e-9)
        assert m.surface_cm2 == pytest.approx(base.surface_cm2 * k ** 2, rel=1e-9)


def test_mask_to_stack_cylinder():
    zz, yy, xx = np.mgrid[0:10, 0:20, 0:20]
    vox = ((xx - 9.5) ** 2 + (yy - 9.5) ** 2) <= 36.0
    mask = Mask3D(voxels=vox.astype(bool), spacing_mm=(0.5, 0.5, 1.0))
    stack = mask_to_stack(mask)
    assert len(stack.slices) == 10
    pts = stack.slices[0][1].points
    assert pts[:, 0].min() == pytest.approx(1.75)
    assert pts[:, 0].max() == pytest.approx(7.75)
    ring_area = polygon_area(stack.slices[0][1])
    pixel_area = vox[0].sum() * 0.25
    assert ring_area == pytest.approx(pixel_area, rel=1e-9)


def test_mask_to_stack_largest_component():
    vox = np.zeros((4, 12, 12), dtype=bool)
    vox[:, 2:6, 2:6] = True
    vox[1:3, 9:11, 9:11] = True
    mask = Mask3D(voxels=vox, spacing_mm=(1.0, 1.0, 1.0))
    with pytest.raises(GeometryError):
        mask_to_stack(mask)
    stack = mask_to_stack(mask, largest_component=True)
    areas = [polygon_area(c) for _, c in stack.slices]
    assert all(a == pytest.approx(16.0) for a in areas)


def test_vessel_angles_straight_through():
    v = VesselAnnotation(
        parent_seg=((0.0, -10.0), (0.0, 0.0)),
        left_seg=((0.0, 0.0), (0.0, 10.0)),
        right_seg=((0.0, 0.0), (8.0, 0.0)),
    )
    a = vessel_angles(v)
    assert a.left_angle_deg == pytest.approx(180.0)
    assert a.right_angle_deg == pytest.approx(90.0)
    assert a.normalized_left == pytest.approx(1.0)
    assert a.normalized_right == pytest.approx(0.5)


def test_vessel_angles_segment_order_free():
    v1 = VesselAnnotation(
        parent_seg=((0.0, -10.0), (0.0, 0.0)),
        left_seg=((0.0, 0.0), (-7.0, 7.0)),
        right_seg=((0.0, 0.0), (7.0, 7.0)),
    )
    v2 = VesselAnnotation(
        parent_seg=((0.0, 0.0), (0.0, -10.0)),
        left_seg=((-7.0, 7.0), (0.0, 0.0)),
        right_seg=((0.0, 0.0), (7.0, 7.0)),
    )
    a1, a2 = vessel_angles(v1), vessel_angles(v2)
    assert a1.left_angle_deg == pytest.approx(a2.left_angle_deg)
    assert a1.right_angle_deg == pytest.approx(a2.right_angle_deg)


def test_vessel_ratios():
    v = VesselAnnotation(
        parent_seg=((0.0, -10.0), (0.0, 0.0)),
        left_seg=((0.0, 0.0), (-7.0, 7.0)),
        right_seg=((0.0, 0.0), (7.0, 7.0)),
        parent_diam_mm=4.0,
        left_diam_mm=2.0,
        right_diam_mm=3.0,
    )
    r = vessel_ratios(v)
    assert r["left_over_parent"] == pytest.approx(0.5)
    assert r["right_over_parent"] == pytest.approx(0.75)
    assert r["larger_over_parent"] == pytest.approx(0.75)
    assert r["left_over_right"] == pytest.approx(2.0 / 3.0)


def test_device_catalog_and_gap():
    catalog = load_device_catalog()
    assert len(catalog) >= 10
    assert all(v > 0 for v in catalog.values())
    assert device_gap(0.3, 0.25) == pytest.approx(0.05)
    assert device_gap(0.2, 0.25) == pytest.approx(-0.05)
