"""Cylinder-model ICP executed in hierarchical tree order.

Each keypart cylinder is registered to its extracted cloud by iterating
nearest-neighbor correspondences (every data point to its closest model
point) and a closed-form SVD update. The torso refines with a free rigid
update; every child part is anchored at its parent joint, so its update
is a pure rotation about that anchor and articulation is preserved by
construction. Keypoint-derived poses provide the initial coarse state,
and supplemented nodes (no cloud exists for them) skip ICP entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import body
from .body import BodyTree, KeypartState, PartDimensions
from .geometry import frame_from_axis, normalize, rotation_between

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


class EmptyCloud(ValueError):
    """No data points available for registration."""


def sample_cylinder_local(radius: float, height: float, n: int) -> np.ndarray:
    """Deterministic quasi-uniform lateral-surface samples, axis = +z.

    Golden-angle helix: axial coordinate spans [0, height] exactly, every
    sample sits at ``radius`` from the axis.
    """
    if n < 8:
        raise ValueError("need at least 8 samples")
    i = np.arange(n, dtype=np.float64)
    z = height * i / (n - 1)
    ang = i * GOLDEN_ANGLE
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang), z])


def sample_cylinder(state: KeypartState, n: int) -> np.ndarray:
    """World-frame lateral-surface samples of a posed keypart cylinder."""
    local = sample_cylinder_local(state.radius, state.height, n)
    frame = frame_from_axis(state.axis)
    return state.base + local @ frame.T


@dataclass
class ICPResult:
    state: KeypartState
    iterations: int
    residual: float
    converged: bool
    note: str = ""


def _trimmed_pairs(model_pts: np.ndarray, data_pts: np.ndarray, trim: float):
    """Nearest model point per data point, outliers trimmed.

    Drops the worst ``trim`` fraction by distance plus anything beyond an
    adaptive gate (3x the median distance), which sheds mask bleed-over
    from adjacent body surfaces without losing true correspondences.
    """
    dist, idx = cKDTree(model_pts).query(data_pts)
    keep = len(data_pts)
    if trim > 0 and len(data_pts) >= 16:
        keep = max(8, int(np.ceil(len(data_pts) * (1.0 - trim))))
        gate = max(3.0 * float(np.median(dist)), 0.02)
        keep = max(8, min(keep, int(np.count_nonzero(dist <= gate))))
    order = np.argsort(dist, kind="stable")[:keep]
    return model_pts[idx[order]], data_pts[order], dist[order]


def _svd_rotation(h: np.ndarray) -> np.ndarray:
    u, _s, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    return vt.T @ np.diag([1.0, 1.0, d]) @ u.T


def best_rigid_update(model_pts: np.ndarray, data_pts: np.ndarray):
    """Closed-form (R, t) minimizing sum ||data - (R model + t)||^2."""
    mc = model_pts.mean(axis=0)
    dc = data_pts.mean(axis=0)
    h = (model_pts - mc).T @ (data_pts - dc)
    r = _svd_rotation(h)
    return r, dc - r @ mc


def best_anchored_rotation(model_pts: np.ndarray, data_pts: np.ndarray,
                           anchor: np.ndarray) -> np.ndarray:
    """Closed-form rotation about a fixed anchor point."""
    h = (model_pts - anchor).T @ (data_pts - anchor)
    return _svd_rotation(h)


def _apply_update(state: KeypartState, r: np.ndarray, t: np.ndarray,
                  anchor: np.ndarray | None) -> KeypartState:
    """Move a cylinder state by (R, t), discarding spin about its own axis.

    The update is reduced to (new base, new axis); attached frames follow
    via the minimal rotation between old and new axis, which keeps torso
    lateral anchors consistent with the keypoints that defined them.
    """
    new = state.copy()
    if anchor is not None:
        new.base = anchor.copy()
        new.axis = normalize(r @ state.axis)
    else:
        new.base = r @ state.base + t
        new.axis = normalize(r @ state.axis)
    if state.frame is not None:
        spin_free = rotation_between(state.axis, new.axis)
        new.frame = spin_free @ state.frame
    return new


def icp_register(model_local: np.ndarray, data_pts: np.ndarray,
                 init: KeypartState, anchor: np.ndarray | None = None,
                 max_iterations: int = 50, tol: float = 1e-6,
                 trim: float = 0.1) -> ICPResult:
    """Register a keypart cylinder to a data cloud.

    ``model_local`` holds canonical samples (axis +z, base at origin)
    re-posed from the evolving state each iteration. With an anchor the
    update is rotation-about-anchor only. Iterations that fail to reduce
    the mean residual are rejected and terminate the loop, so the
    residual is non-increasing across accepted iterations.
    """
    data_pts = np.asarray(data_pts, dtype=np.float64)
    if len(data_pts) == 0:
        return ICPResult(init.copy(), 0, np.inf, False, "empty cloud")
    span = data_pts.max(axis=0) - data_pts.min(axis=0) if len(data_pts) > 1 else np.zeros(3)
    if len(data_pts) < 3 or np.linalg.norm(span) < 1e-9:
        return ICPResult(init.copy(), 0, np.inf, False, "degenerate cloud")

    state = init.copy()
    if anchor is not None:
        state.base = np.asarray(anchor, dtype=np.float64).copy()
        # a stub covering a small axial fraction cannot fix a rotation
        axial = data_pts @ state.axis
        if float(axial.max() - axial.min()) < 0.3 * state.height:
            return ICPResult(state, 0, np.inf, False, "axial stub cloud")

    def evaluate(s: KeypartState):
        model_pts = s.base + model_local @ frame_from_axis(s.axis).T
        m, d, dist = _trimmed_pairs(model_pts, data_pts, trim)
        return m, d, float(np.sqrt((dist ** 2).mean()))

    m, d, residual = evaluate(state)
    iterations = 0
    converged = False
    for _ in range(max_iterations):
        if anchor is not None:
            r = best_anchored_rotation(m, d, state.base)
            candidate = _apply_update(state, r, np.zeros(3), state.base)
        else:
            r, t = best_rigid_update(m, d)
            candidate = _apply_update(state, r, t, None)

        cand_m, cand_d, cand_residual = evaluate(candidate)
        if cand_residual > residual + 1e-12:
            # reject the step; a rejection within tolerance is a fixed point
            converged = (cand_residual - residual) < tol
            break
        improvement = residual - cand_residual
        state, m, d, residual = candidate, cand_m, cand_d, cand_residual
        iterations += 1
        if improvement < tol:
            converged = True
            break

    return ICPResult(state, iterations, float(residual), converged)


def _init_state(part: int, tree: BodyTree, dims: PartDimensions,
                anchor: np.ndarray | None) -> KeypartState | None:
    """Initial coarse state from the joint keypoints."""
    if part == body.TORSO:
        return body.fit_torso_state(tree.keypoints, dims)
    if part == body.HEAD:
        st = body.head_state_from_keypoints(tree.keypoints, dims)
        if st is None and anchor is not None:
            torso = tree.nodes[body.TORSO].state
            axis = torso.axis if torso is not None else np.array([0.0, 0.0, 1.0])
            st = KeypartState(part, np.asarray(anchor), axis,
                              dims.cylinder_height(part), dims.cylinder_radius(part))
        elif st is not None and anchor is not None:
            st.base = np.asarray(anchor, dtype=np.float64).copy()
        return st
    if anchor is None:
        return None
    distal = body.DISTAL_KEYPOINT[part]
    if distal in tree.keypoints:
        d = np.asarray(tree.keypoints[distal], dtype=np.float64) - anchor
        length = float(np.linalg.norm(d))
        # a grossly wrong segment length means the distal lift was polluted
        h = dims.cylinder_height(part)
        if 0.45 * h <= length <= 1.5 * h:
            return KeypartState(part, np.asarray(anchor), normalize(d),
                                h, dims.cylinder_radius(part))
    # no distal evidence: continue along the parent axis (rest-like)
    parent = tree.nodes[body.PARENT[part]].state
    if parent is None:
        return None
    axis = parent.axis if body.PARENT[part] != body.TORSO else -parent.axis
    return KeypartState(part, np.asarray(anchor), axis.copy(),
                        dims.cylinder_height(part), dims.cylinder_radius(part))


def register_tree(tree: BodyTree, clouds: dict, fused: dict,
                  dims: PartDimensions | None = None,
                  model_samples: int = 128) -> BodyTree:
    """Register every active part, parents first, constraints maintained.

    ``clouds`` maps part -> (N, 3) merged world points; ``fused`` maps
    keypoint -> FusedKeypoint (used to refresh the tree's keypoint table).
    Per-part failures mark the node and never abort the rest of the tree.
    """
    dims = dims or PartDimensions()
    for k, fk in fused.items():
        tree.keypoints[k] = np.asarray(fk.position_world, dtype=np.float64)

    settled = []  # confidently registered cylinders, used to strip bleed-over
    for part in tree.traversal():
        node = tree.nodes[part]
        if node.supplemented:
            node.registered = False  # keypoint-derived state only
            continue

        anchor = None if part == body.TORSO else body.parent_joint_position(part, tree)
        state = _init_state(part, tree, dims, anchor)
        if state is None:
            node.note = "no keypoint initialization available"
            node.state = None
            continue
        node.state = state

        data = clouds.get(part)
        if data is None or len(data) == 0:
            node.registered = False
            node.note = "empty cloud; keypoint-initialized state kept"
        else:
            data = np.asarray(data, dtype=np.float64)
            if len(data) > 600:  # registration accuracy saturates well below this
                data = data[:: len(data) // 600 + 1]
            # points explained by already-settled parts are mask bleed-over
            if settled:
                keep = np.ones(len(data), dtype=bool)
                for cyl in settled:
                    keep &= ~cyl.contains(data, radial_margin=0.025)
                if keep.sum() >= 8:
                    data = data[keep]
            model_local = sample_cylinder_local(state.radius, state.height,
                                                model_samples)
            result = icp_register(model_local, data,
                                  state, anchor)
            node.state = result.state
            node.registered = result.converged or result.iterations > 0
            if result.note:
                node.note = result.note
            if node.registered and result.residual < 0.05:
                settled.append(node.state.cylinder())

        # propagate the refined pose into the shared keypoint table
        if part == body.TORSO:
            tree.keypoints.update(body.torso_anchor_points(node.state, dims))
        else:
            distal = body.DISTAL_KEYPOINT.get(part)
            if distal is not None:
                tree.keypoints[distal] = node.state.tip

    return body.enforce_joint_constraints(tree)
