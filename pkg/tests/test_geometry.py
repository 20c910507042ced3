"""Projection, rigid-transform, and ray/cylinder geometry tests.

The ray/cylinder reference is a sphere-tracing oracle on the finite
cylinder's signed distance field, independent of the quadratic solve.
"""

import numpy as np
import pytest

from conftest import random_rigid
from mvsense.geometry import (
    BehindCamera,
    Cylinder,
    InvalidDepth,
    RigidTransform,
    cylinder_clearance,
    normalize,
    project,
    ray_cylinder_intersect,
    reproject,
    rotation_between,
    segment_segment_distance,
    segment_segment_distance_batch,
)


def cylinder_sdf(p, cyl):
    """Signed distance to a finite (capped) cylinder."""
    d = p - cyl.base
    ax = d @ cyl.axis
    rad = np.linalg.norm(d - ax * cyl.axis)
    dr = rad - cyl.radius
    dz = max(-ax, ax - cyl.height)
    if dr <= 0 and dz <= 0:
        return max(dr, dz)
    return float(np.hypot(max(dr, 0.0), max(dz, 0.0)))


def sphere_trace(origin, direction, cyl, t_max=50.0, eps=1e-5):
    """March along the ray by the SDF until a surface hit or escape.

    Grazing rays stop short of the surface, so a sign-change bisection
    polishes the crossing after the march terminates.
    """
    t = 0.0
    hit = None
    for _ in range(10000):
        d = cylinder_sdf(origin + t * direction, cyl)
        if d < eps:
            hit = t
            break
        t += d
        if t > t_max:
            return None
    if hit is None:
        return None
    # bracket the surface crossing and bisect
    lo, hi = hit, None
    step = eps
    probe = hit
    for _ in range(400):
        probe += step
        if cylinder_sdf(origin + probe * direction, cyl) < 0:
            hi = probe
            break
        lo = probe
    if hi is None:
        return hit  # tangential touch: the march point is the best estimate
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if cylinder_sdf(origin + mid * direction, cyl) < 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestProjection:
    def test_optical_axis_point_maps_to_principal_point(self, k_vga):
        pixel, depth = project(np.array([0.0, 0.0, 2.0]),
                               RigidTransform.identity(), k_vga)
        assert pixel == pytest.approx([320.0, 240.0])
        assert depth == pytest.approx(2.0)

    def test_unit_offset(self, k_vga):
        pixel, _ = project(np.array([1.0, 0.0, 2.0]),
                           RigidTransform.identity(), k_vga)
        # 500 * 1/2 + 320
        assert pixel == pytest.approx([570.0, 240.0])

    def test_behind_camera_raises(self, k_vga):
        with pytest.raises(BehindCamera):
            project(np.array([0.0, 0.0, -1.0]), RigidTransform.identity(), k_vga)

    def test_reproject_principal_point(self, k_vga):
        p = reproject((320.0, 240.0), 3.5, k_vga)
        assert p == pytest.approx([0.0, 0.0, 3.5])

    def test_reproject_unit_lateral(self, k_vga):
        p = reproject((320.0 + 500.0, 240.0), 1.0, k_vga)
        assert p == pytest.approx([1.0, 0.0, 1.0])

    def test_reproject_rejects_bad_depth(self, k_vga):
        for bad in (0.0, -1.0, np.nan, np.inf):
            with pytest.raises(InvalidDepth):
                reproject((10.0, 10.0), bad, k_vga)

    def test_round_trip_identity(self, k_vga, rng):
        pose = RigidTransform.identity()
        worst = 0.0
        for _ in range(1000):
            z = rng.uniform(0.1, 10.0)
            p = np.array([rng.uniform(-1, 1) * z, rng.uniform(-1, 1) * z, z])
            pixel, depth = project(p, pose, k_vga)
            back = reproject(pixel, depth, k_vga)
            worst = max(worst, float(np.abs(back - p).max()))
        assert worst < 1e-9

    def test_round_trip_with_pose(self, k_vga, rng):
        for _ in range(100):
            pose = random_rigid(rng)
            p_cam = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1),
                              rng.uniform(0.5, 5.0)])
            p_world = pose.apply(p_cam)
            pixel, depth = project(p_world, pose, k_vga)
            assert np.allclose(reproject(pixel, depth, k_vga), p_cam, atol=1e-9)


class TestRigidTransform:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            RigidTransform(np.eye(3) * 2.0, np.zeros(3))

    def test_rejects_reflection(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            RigidTransform(r, np.zeros(3))

    def test_compose_with_inverse_is_identity(self, rng):
        for _ in range(50):
            a = random_rigid(rng)
            ident = a.compose(a.inverse())
            assert np.allclose(ident.rotation, np.eye(3), atol=1e-9)
            assert np.allclose(ident.translation, 0.0, atol=1e-9)

    def test_compose_order_applies_other_first(self, rng):
        a = random_rigid(rng)
        b = random_rigid(rng)
        p = rng.uniform(-1, 1, 3)
        assert np.allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)

    def test_rotation_orthonormal_within_tolerance(self, rng):
        a = random_rigid(rng)
        assert np.abs(a.rotation.T @ a.rotation - np.eye(3)).max() < 1e-9


class TestCylinder:
    def test_axis_must_be_unit(self):
        with pytest.raises(ValueError):
            Cylinder(np.zeros(3), np.array([0.0, 0.0, 2.0]), 1.0, 0.5)

    def test_from_endpoints(self):
        c = Cylinder.from_endpoints((0, 0, 0), (0, 0, 2), 0.3)
        assert c.height == pytest.approx(2.0)
        assert c.axis == pytest.approx([0, 0, 1])

    def test_contains(self):
        c = Cylinder(np.zeros(3), np.array([0.0, 0.0, 1.0]), 1.0, 0.5)
        inside = c.contains(np.array([[0.1, 0.0, 0.5], [0.9, 0.0, 0.5],
                                      [0.0, 0.0, 1.5]]))
        assert inside.tolist() == [True, False, False]


class TestRayCylinder:
    def setup_method(self):
        self.cyl = Cylinder(np.zeros(3), np.array([0.0, 0.0, 1.0]), 1.0, 0.5)

    def test_hits_top_cap(self):
        t = ray_cylinder_intersect((0, 0, 5), (0, 0, -1), self.cyl)
        assert t == pytest.approx(4.0, abs=1e-12)

    def test_lateral_miss(self):
        assert ray_cylinder_intersect((2, 0, 0.5), (0, 0, -1), self.cyl) is None

    def test_lateral_hit(self):
        t = ray_cylinder_intersect((2, 0, 0.5), (-1, 0, 0), self.cyl)
        assert t == pytest.approx(1.5, abs=1e-12)

    def test_inside_hits_wall(self):
        t = ray_cylinder_intersect((0, 0, 0.5), (1, 0, 0), self.cyl)
        assert t == pytest.approx(0.5, abs=1e-12)

    def test_random_rays_match_sphere_tracing(self, rng):
        hits = 0
        for i in range(1000):
            origin = rng.uniform(-3, 3, 3)
            if cylinder_sdf(origin, self.cyl) < 0.05:
                continue  # keep origins outside the surface
            if i % 2 == 0:
                # aim at the body so hits are well represented
                target = np.array([rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                                   rng.uniform(0.05, 0.95)])
                direction = normalize(target - origin)
            else:
                direction = normalize(rng.normal(size=3))
            ours = ray_cylinder_intersect(origin, direction, self.cyl)
            oracle = sphere_trace(origin, direction, self.cyl)
            if oracle is None:
                assert ours is None or ours > 40.0
            else:
                hits += 1
                assert ours == pytest.approx(oracle, abs=1e-4)
        assert hits > 300  # the comparison actually exercised hits

    def test_rigid_covariance(self, rng):
        for _ in range(200):
            origin = rng.uniform(-3, 3, 3)
            direction = normalize(rng.normal(size=3))
            t0 = ray_cylinder_intersect(origin, direction, self.cyl)
            x = random_rigid(rng)
            moved = Cylinder(x.apply(self.cyl.base), x.apply_vector(self.cyl.axis),
                             self.cyl.height, self.cyl.radius)
            t1 = ray_cylinder_intersect(x.apply(origin), x.apply_vector(direction),
                                        moved)
            if t0 is None:
                assert t1 is None
            else:
                assert t1 == pytest.approx(t0, abs=1e-9)


class TestSegmentsAndClearance:
    def test_parallel_segments(self):
        d = segment_segment_distance((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0))
        assert d == pytest.approx(1.0, abs=1e-12)

    def test_crossing_segments(self):
        d = segment_segment_distance((-1, 0, 0), (1, 0, 0), (0, -1, 1), (0, 1, 1))
        assert d == pytest.approx(1.0, abs=1e-12)

    def test_matches_dense_sampling(self, rng):
        for _ in range(50):
            p0, p1, q0, q1 = rng.uniform(-1, 1, (4, 3))
            fast = segment_segment_distance(p0, p1, q0, q1)
            s = np.linspace(0, 1, 400)
            pa = p0 + s[:, None] * (p1 - p0)
            qb = q0 + s[:, None] * (q1 - q0)
            dense = np.sqrt(
                ((pa[:, None, :] - qb[None, :, :]) ** 2).sum(-1)).min()
            assert fast <= dense + 1e-9
            assert fast >= dense - 5e-3  # sampling resolution slack

    def test_batch_matches_scalar(self, rng):
        p0, p1 = rng.uniform(-1, 1, (2, 4, 3))
        q0, q1 = rng.uniform(-1, 1, (2, 5, 3))
        batch = segment_segment_distance_batch(p0, p1, q0, q1)
        for i in range(4):
            for j in range(5):
                assert batch[i, j] == pytest.approx(
                    segment_segment_distance(p0[i], p1[i], q0[j], q1[j]), abs=1e-12)

    def test_clearance_floors_at_zero(self):
        a = Cylinder(np.zeros(3), np.array([0, 0, 1.0]), 1.0, 0.3)
        b = Cylinder(np.array([0.1, 0, 0.0]), np.array([0, 0, 1.0]), 1.0, 0.3)
        assert cylinder_clearance(a, b) == 0.0

    def test_clearance_positive(self):
        a = Cylinder(np.zeros(3), np.array([0, 0, 1.0]), 1.0, 0.3)
        b = Cylinder(np.array([2.0, 0, 0.0]), np.array([0, 0, 1.0]), 1.0, 0.3)
        assert cylinder_clearance(a, b) == pytest.approx(1.4, abs=1e-9)


class TestRotationBetween:
    def test_small_and_large_angles(self, rng):
        for _ in range(200):
            a = normalize(rng.normal(size=3))
            b = normalize(rng.normal(size=3))
            r = rotation_between(a, b)
            assert np.allclose(r @ a, b, atol=1e-9)
            assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)

    def test_antiparallel(self):
        a = np.array([0.0, 0.0, 1.0])
        r = rotation_between(a, -a)
        assert np.allclose(r @ a, -a, atol=1e-9)
