"""Cylinder ICP and hierarchical tree registration.

Known-transform recovery uses synthetic clouds generated from the model
itself; the SVD-step optimality check compares the closed-form update
against random rigid perturbations at fixed correspondences.
"""

import time

import numpy as np
import pytest

from mvsense import body
from mvsense.body import KeypartState, augment, build_tree, rest_dofs, pose_from_dofs
from mvsense.geometry import normalize, rot_x, rot_y, rot_z
from mvsense.registration import (
    best_anchored_rotation,
    best_rigid_update,
    icp_register,
    register_tree,
    sample_cylinder,
    sample_cylinder_local,
)


def axis_angle_deg(a, b):
    return float(np.degrees(np.arccos(np.clip(np.dot(normalize(a), normalize(b)),
                                              -1.0, 1.0))))


class TestSampleCylinder:
    def test_all_samples_on_lateral_surface(self):
        pts = sample_cylinder_local(0.05, 0.3, 200)
        rad = np.hypot(pts[:, 0], pts[:, 1])
        assert np.allclose(rad, 0.05, atol=1e-12)

    def test_axial_span_equals_height(self):
        pts = sample_cylinder_local(0.05, 0.3, 128)
        assert pts[:, 2].max() - pts[:, 2].min() == pytest.approx(0.3, abs=1e-9)

    def test_centroid_near_axis_midpoint(self):
        for n in (64, 256, 1024):
            pts = sample_cylinder_local(0.08, 0.4, n)
            c = pts.mean(axis=0)
            assert abs(c[2] - 0.2) < 1e-9  # z grid is symmetric
            assert np.hypot(c[0], c[1]) < 0.08 * 5.0 / n  # O(1/n) lateral bias

    def test_deterministic_for_fixed_n(self):
        a = sample_cylinder_local(0.05, 0.3, 100)
        b = sample_cylinder_local(0.05, 0.3, 100)
        assert np.array_equal(a, b)

    def test_minimum_count_enforced(self):
        with pytest.raises(ValueError):
            sample_cylinder_local(0.05, 0.3, 4)

    def test_world_samples_follow_state(self):
        st = KeypartState(2, np.array([1.0, 2.0, 3.0]),
                          normalize(np.array([1.0, 1.0, 0.0])), 0.3, 0.05)
        pts = sample_cylinder(st, 64)
        d = pts - st.base
        ax = d @ st.axis
        rad = np.sqrt(np.maximum((d * d).sum(1) - ax ** 2, 0))
        assert np.allclose(rad, 0.05, atol=1e-9)
        assert ax.min() == pytest.approx(0.0, abs=1e-9)
        assert ax.max() == pytest.approx(0.3, abs=1e-9)


class TestClosedFormUpdates:
    def test_rigid_update_recovers_transform(self, rng):
        pts = rng.uniform(-1, 1, (100, 3))
        r_true = rot_z(0.4) @ rot_x(-0.2)
        t_true = np.array([0.3, -0.1, 0.5])
        moved = pts @ r_true.T + t_true
        r, t = best_rigid_update(pts, moved)
        assert np.allclose(r, r_true, atol=1e-9)
        assert np.allclose(t, t_true, atol=1e-9)

    def test_anchored_rotation_recovers_rotation(self, rng):
        anchor = np.array([0.5, 0.5, 0.5])
        pts = rng.uniform(-1, 1, (100, 3))
        r_true = rot_y(0.3)
        moved = (pts - anchor) @ r_true.T + anchor
        r = best_anchored_rotation(pts, moved, anchor)
        assert np.allclose(r, r_true, atol=1e-9)

    def test_svd_step_optimality_against_perturbations(self, rng):
        model = rng.uniform(-1, 1, (60, 3))
        data = model @ rot_z(0.2).T + np.array([0.1, 0.0, -0.2]) \
            + rng.normal(0, 0.01, (60, 3))
        r, t = best_rigid_update(model, data)
        best = ((model @ r.T + t - data) ** 2).sum()
        for _ in range(1000):
            axis = normalize(rng.normal(size=3))
            ang = rng.uniform(-np.radians(5), np.radians(5))
            c, s = np.cos(ang), np.sin(ang)
            vx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]],
                           [-axis[1], axis[0], 0]])
            r_p = (np.eye(3) + s * vx + (1 - c) * vx @ vx) @ r
            t_p = t + rng.uniform(-0.05, 0.05, 3)
            perturbed = ((model @ r_p.T + t_p - data) ** 2).sum()
            assert perturbed >= best - 1e-12


class TestIcpRegister:
    def _make(self, radius=0.05, height=0.3):
        st = KeypartState(2, np.zeros(3), np.array([0.0, 0.0, 1.0]), height, radius)
        model = sample_cylinder_local(radius, height, 160)
        return st, model

    def test_identity_on_exact_data(self):
        st, model = self._make()
        data = sample_cylinder(st, len(model))  # the posed model set itself
        res = icp_register(model, data, st, anchor=st.base)
        assert res.converged
        assert axis_angle_deg(res.state.axis, st.axis) < 1e-6
        assert res.residual < 1e-9

    def test_recovers_rotation_about_anchor(self, rng):
        st, model = self._make()
        anchor = st.base
        r_true = rot_x(np.radians(10.0))
        data_state = KeypartState(2, anchor, normalize(r_true @ st.axis),
                                  st.height, st.radius)
        data = sample_cylinder(data_state, len(model))
        res = icp_register(model, data, st, anchor=anchor)
        assert axis_angle_deg(res.state.axis, data_state.axis) < 0.5
        assert res.residual < 1e-4

    def test_noisy_recovery_monte_carlo(self):
        st, model = self._make()
        anchor = st.base
        ok = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            axis = normalize(rot_x(np.radians(12.0)) @ st.axis)
            data_state = KeypartState(2, anchor, axis, st.height, st.radius)
            data = sample_cylinder(data_state, 600)
            data = data + rng.normal(0, 0.005, data.shape)
            res = icp_register(model, data, st, anchor=anchor)
            if axis_angle_deg(res.state.axis, axis) < 2.0:
                ok += 1
        assert ok >= 95

    def test_empty_cloud_returns_init_not_converged(self):
        st, model = self._make()
        res = icp_register(model, np.zeros((0, 3)), st)
        assert not res.converged
        assert np.allclose(res.state.axis, st.axis)
        assert res.note == "empty cloud"

    def test_collapsed_cloud_flagged_degenerate(self):
        st, model = self._make()
        data = np.tile(np.array([0.05, 0.0, 0.15]), (50, 1))
        res = icp_register(model, data, st)
        assert not res.converged
        assert "degenerate" in res.note

    def test_residual_monotone_over_accepted_iterations(self, rng):
        # instrument by re-running with increasing iteration caps
        st, model = self._make()
        axis = normalize(np.array([0.25, 0.1, 1.0]))
        data_state = KeypartState(2, st.base, axis, st.height, st.radius)
        data = sample_cylinder(data_state, 500) + rng.normal(0, 0.002, (500, 3))
        residuals = []
        for cap in range(1, 12):
            res = icp_register(model, data, st, anchor=st.base,
                               max_iterations=cap)
            residuals.append(res.residual)
        for a, b in zip(residuals, residuals[1:]):
            assert b <= a + 1e-12

    def test_free_icp_recovers_full_transform(self):
        st, model = self._make(radius=0.15, height=0.55)
        r_true = rot_z(0.15) @ rot_x(np.radians(8.0))
        t_true = np.array([0.02, -0.015, 0.01])
        moved = KeypartState(0, st.base + t_true, normalize(r_true @ st.axis),
                             st.height, st.radius)
        data = sample_cylinder(moved, len(model))
        res = icp_register(model, data, st, anchor=None)
        assert axis_angle_deg(res.state.axis, moved.axis) < 0.5
        assert np.linalg.norm(res.state.base - moved.base) < 1e-3

    def test_runtime_2000_points(self):
        st, model = self._make()
        axis = normalize(rot_x(np.radians(9.0)) @ st.axis)
        data = sample_cylinder(
            KeypartState(2, st.base, axis, st.height, st.radius), 2000)
        icp_register(model, data, st, anchor=st.base)  # warm caches
        t0 = time.perf_counter()
        icp_register(model, data, st, anchor=st.base)
        assert time.perf_counter() - t0 < 0.05

    def test_deterministic(self, rng):
        st, model = self._make()
        data = sample_cylinder(st, 400) + rng.normal(0, 0.004, (400, 3))
        r1 = icp_register(model, data, st, anchor=st.base)
        r2 = icp_register(model, data, st, anchor=st.base)
        assert np.array_equal(r1.state.axis, r2.state.axis)
        assert r1.residual == r2.residual
        assert r1.iterations == r2.iterations


class TestRegisterTree:
    def _fused_from_pose(self, pose):
        from mvsense.keypoints import FusedKeypoint
        return {k: FusedKeypoint(k, pose.keypoints[k], 0.8, 2)
                for k in range(body.NUM_KEYPOINTS)}

    def _clouds_from_pose(self, pose, parts, n=400, rng=None):
        clouds = {}
        for p in parts:
            pts = sample_cylinder(pose.states[p], n)
            if rng is not None:
                pts = pts + rng.normal(0, 0.003, pts.shape)
            clouds[p] = pts
        return clouds

    def test_full_frame_registration_accuracy(self, rng):
        dofs = rest_dofs(position=(0.2, 0.1, 0.9), heading=0.3)
        dofs[8:10] = (-0.3, -0.4)
        dofs[12:14] = (-0.2, 0.5)
        pose = pose_from_dofs(dofs)
        tree = augment(build_tree(range(10)), dict(enumerate(pose.keypoint_array())))
        clouds = self._clouds_from_pose(pose, range(10), rng=rng)
        tree = register_tree(tree, clouds, self._fused_from_pose(pose))
        for p in range(10):
            st = tree.nodes[p].state
            assert st is not None
            assert axis_angle_deg(st.axis, pose.states[p].axis) < 3.0
            est_mid = st.base + st.axis * st.height * 0.5
            assert np.linalg.norm(est_mid - pose.states[p].cylinder().midpoint) < 0.03

    def test_joint_gaps_zero_after_registration(self, rng):
        pose = pose_from_dofs(rest_dofs())
        tree = augment(build_tree(range(10)), dict(enumerate(pose.keypoint_array())))
        clouds = self._clouds_from_pose(pose, range(10), rng=rng)
        tree = register_tree(tree, clouds, self._fused_from_pose(pose))
        for part, parent in body.PARENT.items():
            if parent is None:
                continue
            child = tree.nodes[part].state
            from mvsense.body import parent_joint_position
            joint = parent_joint_position(part, tree)
            assert np.linalg.norm(child.base - joint) < 1e-6

    def test_arm_only_visible_articulates_to_supplemented_torso(self):
        pose = pose_from_dofs(rest_dofs())
        kps = dict(enumerate(pose.keypoint_array()))
        tree = augment(build_tree([body.L_UPPER_ARM, body.L_LOWER_ARM]), kps)
        assert tree.nodes[body.TORSO].supplemented
        clouds = self._clouds_from_pose(pose, [body.L_UPPER_ARM, body.L_LOWER_ARM])
        tree = register_tree(tree, clouds, self._fused_from_pose(pose))
        ua = tree.nodes[body.L_UPPER_ARM]
        assert ua.state is not None
        assert np.linalg.norm(ua.state.base - np.asarray(kps[body.L_SHOULDER])) < 1e-6

    def test_empty_leg_cloud_keeps_keypoint_state_with_flag(self):
        pose = pose_from_dofs(rest_dofs())
        tree = augment(build_tree(range(10)), dict(enumerate(pose.keypoint_array())))
        clouds = self._clouds_from_pose(pose, [p for p in range(10)
                                               if p != body.L_LOWER_LEG])
        tree = register_tree(tree, clouds, self._fused_from_pose(pose))
        node = tree.nodes[body.L_LOWER_LEG]
        assert node.state is not None
        assert not node.registered
        assert "empty cloud" in node.note
        # keypoint-derived init: axis along knee -> ankle
        expected = normalize(pose.keypoints[body.L_ANKLE] - pose.keypoints[body.L_KNEE])
        assert axis_angle_deg(node.state.axis, expected) < 1.0

    def test_supplemented_parts_skip_icp(self):
        pose = pose_from_dofs(rest_dofs())
        kps = dict(enumerate(pose.keypoint_array()))
        tree = augment(build_tree([body.TORSO, body.L_LOWER_ARM]), kps)
        clouds = self._clouds_from_pose(pose, [body.TORSO, body.L_LOWER_ARM])
        clouds[body.L_UPPER_ARM] = sample_cylinder(pose.states[body.L_UPPER_ARM], 300)
        tree = register_tree(tree, clouds, self._fused_from_pose(pose))
        assert tree.nodes[body.L_UPPER_ARM].supplemented
        assert not tree.nodes[body.L_UPPER_ARM].registered

    def test_hierarchical_determinism(self, rng):
        pose = pose_from_dofs(rest_dofs())
        kps = dict(enumerate(pose.keypoint_array()))
        clouds = self._clouds_from_pose(pose, range(10), rng=rng)
        fused = self._fused_from_pose(pose)

        def run():
            tree = augment(build_tree(range(10)), dict(kps))
            return register_tree(tree, {k: v.copy() for k, v in clouds.items()},
                                 fused)

        t1, t2 = run(), run()
        assert t1.traversal() == t2.traversal()
        for p in range(10):
            s1, s2 = t1.nodes[p].state, t2.nodes[p].state
            assert np.array_equal(s1.base, s2.base)
            assert np.array_equal(s1.axis, s2.axis)
