"""Cylinder human-body model: 17 keypoints, 10 keyparts, directed tree.

Keypoints follow the COCO ordering (0 nose ... 16 right ankle). Keyparts
are rigid cylinders joined at keypoints; the torso is the root and every
other part hangs off it parent-before-child:

    torso(0) -> head(1), upper arms(2, 4), upper legs(6, 8)
    upper segment -> its lower segment (3, 5, 7, 9)

A part's pose is its world-frame cylinder (base at the proximal joint,
axis toward the distal joint). Limb orientation relative to the parent is
two angles applied intrinsically x-then-y to the parent reference frame;
spin about a part's own cylinder axis is not modeled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Cylinder, normalize, rot_x, rot_y, rot_z

# COCO keypoint indices
NOSE, L_EYE, R_EYE, L_EAR, R_EAR = 0, 1, 2, 3, 4
L_SHOULDER, R_SHOULDER = 5, 6
L_ELBOW, R_ELBOW = 7, 8
L_WRIST, R_WRIST = 9, 10
L_HIP, R_HIP = 11, 12
L_KNEE, R_KNEE = 13, 14
L_ANKLE, R_ANKLE = 15, 16

NUM_KEYPOINTS = 17

KEYPOINT_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

# keypart indices
TORSO, HEAD = 0, 1
L_UPPER_ARM, L_LOWER_ARM = 2, 3
R_UPPER_ARM, R_LOWER_ARM = 4, 5
L_UPPER_LEG, L_LOWER_LEG = 6, 7
R_UPPER_LEG, R_LOWER_LEG = 8, 9

NUM_KEYPARTS = 10

KEYPART_NAMES = (
    "torso", "head",
    "left_upper_arm", "left_lower_arm",
    "right_upper_arm", "right_lower_arm",
    "left_upper_leg", "left_lower_leg",
    "right_upper_leg", "right_lower_leg",
)

# parent of each keypart; torso is the root
PARENT = {
    TORSO: None,
    HEAD: TORSO,
    L_UPPER_ARM: TORSO,
    L_LOWER_ARM: L_UPPER_ARM,
    R_UPPER_ARM: TORSO,
    R_LOWER_ARM: R_UPPER_ARM,
    L_UPPER_LEG: TORSO,
    L_LOWER_LEG: L_UPPER_LEG,
    R_UPPER_LEG: TORSO,
    R_LOWER_LEG: R_UPPER_LEG,
}

# keypoints encompassed by each keypart (segment level)
PART_KEYPOINTS = {
    TORSO: (L_SHOULDER, R_SHOULDER, L_HIP, R_HIP),
    HEAD: (NOSE, L_EYE, R_EYE, L_EAR, R_EAR),
    L_UPPER_ARM: (L_SHOULDER, L_ELBOW),
    L_LOWER_ARM: (L_ELBOW, L_WRIST),
    R_UPPER_ARM: (R_SHOULDER, R_ELBOW),
    R_LOWER_ARM: (R_ELBOW, R_WRIST),
    L_UPPER_LEG: (L_HIP, L_KNEE),
    L_LOWER_LEG: (L_KNEE, L_ANKLE),
    R_UPPER_LEG: (R_HIP, R_KNEE),
    R_LOWER_LEG: (R_KNEE, R_ANKLE),
}

# grouped membership (torso / head / whole limbs), used for bookkeeping checks
PART_GROUP_KEYPOINTS = {
    "torso": frozenset({L_SHOULDER, R_SHOULDER, L_HIP, R_HIP}),
    "head": frozenset({NOSE, L_EYE, R_EYE, L_EAR, R_EAR}),
    "left_arm": frozenset({L_SHOULDER, L_ELBOW, L_WRIST}),
    "right_arm": frozenset({R_SHOULDER, R_ELBOW, R_WRIST}),
    "left_leg": frozenset({L_HIP, L_KNEE, L_ANKLE}),
    "right_leg": frozenset({R_HIP, R_KNEE, R_ANKLE}),
}

# joint keypoint labelling the edge parent -> child (None: head articulates
# at the synthetic neck, the shoulder midpoint)
EDGE_KEYPOINT = {
    HEAD: None,
    L_UPPER_ARM: L_SHOULDER,
    L_LOWER_ARM: L_ELBOW,
    R_UPPER_ARM: R_SHOULDER,
    R_LOWER_ARM: R_ELBOW,
    L_UPPER_LEG: L_HIP,
    L_LOWER_LEG: L_KNEE,
    R_UPPER_LEG: R_HIP,
    R_LOWER_LEG: R_KNEE,
}

# distal keypoint of each limb segment (None for torso / head)
DISTAL_KEYPOINT = {
    L_UPPER_ARM: L_ELBOW, L_LOWER_ARM: L_WRIST,
    R_UPPER_ARM: R_ELBOW, R_LOWER_ARM: R_WRIST,
    L_UPPER_LEG: L_KNEE, L_LOWER_LEG: L_ANKLE,
    R_UPPER_LEG: R_KNEE, R_LOWER_LEG: R_ANKLE,
}

# degrees of freedom per part: torso is free, everything else rotates
# about its proximal joint with spin discarded
PART_DOF = {p: 6 if p == TORSO else 2 for p in range(NUM_KEYPARTS)}

TOTAL_DOF = sum(PART_DOF.values())  # 24


@dataclass(frozen=True)
class PartDimensions:
    """Cylinder radius/height per keypart plus torso anchor widths.

    The model treats these as predefined; scenario files may override any
    of them.
    """

    radius: tuple = (0.15, 0.10, 0.05, 0.05, 0.05, 0.05, 0.07, 0.06, 0.07, 0.06)
    height: tuple = (0.55, 0.24, 0.30, 0.28, 0.30, 0.28, 0.42, 0.42, 0.42, 0.42)
    shoulder_width: float = 0.36
    hip_width: float = 0.26

    def cylinder_radius(self, part: int) -> float:
        return self.radius[part]

    def cylinder_height(self, part: int) -> float:
        return self.height[part]


@dataclass
class KeypartState:
    """World-frame pose of one keypart cylinder.

    ``frame`` is the part's orthonormal frame (columns x-lateral, y-?, z)
    and is only required for the torso, whose lateral axes position the
    shoulder/hip anchors; limbs are fully described by base + axis.
    """

    part: int
    base: np.ndarray
    axis: np.ndarray
    height: float
    radius: float
    frame: np.ndarray | None = None

    def cylinder(self) -> Cylinder:
        return Cylinder(self.base, normalize(self.axis), self.height, self.radius)

    @property
    def tip(self) -> np.ndarray:
        return self.base + self.axis * self.height

    def copy(self) -> "KeypartState":
        return KeypartState(
            self.part,
            self.base.copy(),
            self.axis.copy(),
            self.height,
            self.radius,
            None if self.frame is None else self.frame.copy(),
        )


class UnanchorablePart(RuntimeError):
    """A present part has no keypoint path that can localize its supplement."""


@dataclass
class TreeNode:
    part: int
    present: bool = False
    supplemented: bool = False
    state: KeypartState | None = None
    registered: bool = False
    note: str = ""

    @property
    def active(self) -> bool:
        return self.present or self.supplemented


@dataclass
class BodyTree:
    """Directed keypart tree with presence flags and estimated keypoints."""

    nodes: dict = field(default_factory=dict)
    keypoints: dict = field(default_factory=dict)  # keypoint id -> world pos
    excluded: list = field(default_factory=list)

    def __post_init__(self):
        if not self.nodes:
            self.nodes = {p: TreeNode(p) for p in range(NUM_KEYPARTS)}

    def active_parts(self) -> list:
        return [p for p in range(NUM_KEYPARTS) if self.nodes[p].active]

    def traversal(self) -> list:
        """Active parts, parents strictly before children."""
        out = []
        for p in range(NUM_KEYPARTS):  # index order is already topological
            if self.nodes[p].active:
                out.append(p)
        return out

    def is_connected(self) -> bool:
        """True when every active node reaches the root through active nodes."""
        active = set(self.active_parts())
        if not active:
            return True
        if TORSO not in active:
            return False
        for p in active:
            q = p
            while q is not None:
                if q not in active:
                    return False
                q = PARENT[q]
        return True


def build_tree(present_parts) -> BodyTree:
    """Tree with presence flags set from the observed keypart set."""
    tree = BodyTree()
    for p in present_parts:
        if p not in tree.nodes:
            raise ValueError(f"unknown keypart {p}")
        tree.nodes[p].present = True
    return tree


def neck_point(keypoints: dict) -> np.ndarray | None:
    if L_SHOULDER in keypoints and R_SHOULDER in keypoints:
        return 0.5 * (np.asarray(keypoints[L_SHOULDER]) + np.asarray(keypoints[R_SHOULDER]))
    return None


def fit_torso_state(keypoints: dict, dims: PartDimensions) -> KeypartState | None:
    """Torso pose from its anchor keypoints (5, 6, 11, 12).

    With both shoulders and both hips the frame comes from the anchor
    plane: origin at the hip midpoint, up axis along hips->shoulders,
    lateral axis along left->right shoulder projected onto the plane.
    Three anchors reconstruct the fourth by parallelogram symmetry; two
    same-side anchors fall back to an upright guess. Returns None when
    fewer than two anchors are known.
    """
    anchors = {k: np.asarray(keypoints[k], dtype=np.float64)
               for k in (L_SHOULDER, R_SHOULDER, L_HIP, R_HIP) if k in keypoints}
    if len(anchors) < 2:
        return None

    if len(anchors) == 3:
        # parallelogram symmetry: missing = level-mate + side-mate - diagonal
        missing = next(k for k in (L_SHOULDER, R_SHOULDER, L_HIP, R_HIP) if k not in anchors)
        level, side, diag = {
            L_SHOULDER: (R_SHOULDER, L_HIP, R_HIP),
            R_SHOULDER: (L_SHOULDER, R_HIP, L_HIP),
            L_HIP: (R_HIP, L_SHOULDER, R_SHOULDER),
            R_HIP: (L_HIP, R_SHOULDER, L_SHOULDER),
        }[missing]
        anchors[missing] = anchors[level] + anchors[side] - anchors[diag]

    if len(anchors) == 4:
        sh_mid = 0.5 * (anchors[L_SHOULDER] + anchors[R_SHOULDER])
        hip_mid = 0.5 * (anchors[L_HIP] + anchors[R_HIP])
        up = sh_mid - hip_mid
        if np.linalg.norm(up) < 1e-6:
            return None
        up = normalize(up)
        lat = anchors[R_SHOULDER] - anchors[L_SHOULDER]
        lat = lat - (lat @ up) * up
        if np.linalg.norm(lat) < 1e-6:
            return None
        lat = normalize(lat)
        base = hip_mid
    else:
        # two anchors: assume upright, derive what we can
        if L_SHOULDER in anchors and R_SHOULDER in anchors:
            sh_mid = 0.5 * (anchors[L_SHOULDER] + anchors[R_SHOULDER])
            up = np.array([0.0, 0.0, 1.0])
            lat = anchors[R_SHOULDER] - anchors[L_SHOULDER]
            base = sh_mid - up * dims.cylinder_height(TORSO)
        elif L_HIP in anchors and R_HIP in anchors:
            hip_mid = 0.5 * (anchors[L_HIP] + anchors[R_HIP])
            up = np.array([0.0, 0.0, 1.0])
            lat = anchors[R_HIP] - anchors[L_HIP]
            base = hip_mid
        else:
            return None
        lat = lat - (lat @ up) * up
        if np.linalg.norm(lat) < 1e-6:
            return None
        lat = normalize(lat)

    fwd = np.cross(lat, up)
    frame = np.column_stack([lat, up, fwd])
    return KeypartState(
        TORSO, base, up,
        dims.cylinder_height(TORSO), dims.cylinder_radius(TORSO), frame,
    )


def torso_anchor_points(state: KeypartState, dims: PartDimensions) -> dict:
    """Shoulder/hip keypoint positions implied by a torso state."""
    lat = state.frame[:, 0]
    top = state.tip
    base = state.base
    return {
        L_SHOULDER: top - 0.5 * dims.shoulder_width * lat,
        R_SHOULDER: top + 0.5 * dims.shoulder_width * lat,
        L_HIP: base - 0.5 * dims.hip_width * lat,
        R_HIP: base + 0.5 * dims.hip_width * lat,
    }


def _limb_supplement_state(part: int, keypoints: dict, dims: PartDimensions) -> KeypartState | None:
    prox = EDGE_KEYPOINT[part]
    dist = DISTAL_KEYPOINT.get(part)
    if prox not in keypoints or dist not in keypoints:
        return None
    p0 = np.asarray(keypoints[prox], dtype=np.float64)
    p1 = np.asarray(keypoints[dist], dtype=np.float64)
    if np.linalg.norm(p1 - p0) < 1e-9:
        return None
    return KeypartState(
        part, p0, normalize(p1 - p0),
        dims.cylinder_height(part), dims.cylinder_radius(part),
    )


def head_state_from_keypoints(keypoints: dict, dims: PartDimensions) -> KeypartState | None:
    """Head axis from the face-keypoint centroid relative to the neck."""
    face = [np.asarray(keypoints[k], dtype=np.float64)
            for k in PART_KEYPOINTS[HEAD] if k in keypoints]
    neck = neck_point(keypoints)
    if not face or neck is None:
        return None
    centroid = np.mean(face, axis=0)
    d = centroid - neck
    if np.linalg.norm(d) < 1e-9:
        return None
    return KeypartState(
        HEAD, neck, normalize(d),
        dims.cylinder_height(HEAD), dims.cylinder_radius(HEAD),
    )


def supplement_state(part: int, keypoints: dict, dims: PartDimensions) -> KeypartState | None:
    """Keypoint-derived state for a node inserted only for connectivity."""
    if part == TORSO:
        return fit_torso_state(keypoints, dims)
    if part == HEAD:
        return head_state_from_keypoints(keypoints, dims)
    return _limb_supplement_state(part, keypoints, dims)


def augment(tree: BodyTree, fused_keypoints: dict,
            dims: PartDimensions | None = None) -> BodyTree:
    """Mark the minimal absent ancestors as supplemented so every present
    part connects to the root.

    Supplement states come from the fused keypoints. A present part whose
    required supplements cannot be localized is excluded from the tree and
    recorded in ``tree.excluded``.
    """
    dims = dims or PartDimensions()
    tree.keypoints.update(
        {k: np.asarray(v, dtype=np.float64) for k, v in fused_keypoints.items()}
    )

    present = [p for p in range(NUM_KEYPARTS) if tree.nodes[p].present]
    if not present:
        return tree

    needed = set()
    for p in present:
        q = PARENT[p]
        while q is not None:
            if not tree.nodes[q].present:
                needed.add(q)
            q = PARENT[q]

    # resolve supplements root-first so dependents can assume ancestors exist
    states = {}
    unanchorable = set()
    for q in sorted(needed):
        state = supplement_state(q, tree.keypoints, dims)
        if state is None:
            unanchorable.add(q)
        else:
            states[q] = state

    for p in present:
        q = PARENT[p]
        blocked = False
        while q is not None:
            if not tree.nodes[q].present and (q in unanchorable):
                blocked = True
                break
            q = PARENT[q]
        if blocked:
            tree.nodes[p].present = False
            tree.nodes[p].note = "excluded: supplement chain unanchorable"
            tree.excluded.append(p)

    # keep only supplements still required by surviving parts
    still_needed = set()
    for p in range(NUM_KEYPARTS):
        if tree.nodes[p].present:
            q = PARENT[p]
            while q is not None:
                if not tree.nodes[q].present:
                    still_needed.add(q)
                q = PARENT[q]
    for q in sorted(still_needed):
        node = tree.nodes[q]
        node.supplemented = True
        node.state = states[q]
        if q == TORSO and not all(
            k in tree.keypoints for k in PART_KEYPOINTS[TORSO]
        ):
            # record the implied anchors so children can articulate
            tree.keypoints.update(
                {k: v for k, v in torso_anchor_points(states[q], dims).items()
                 if k not in tree.keypoints}
            )
    return tree


def parent_joint_position(part: int, tree: BodyTree) -> np.ndarray | None:
    """World position of the joint where ``part`` attaches to its parent."""
    kp = EDGE_KEYPOINT.get(part)
    if kp is None:  # head: synthetic neck
        parent = tree.nodes[TORSO]
        if parent.state is not None:
            return parent.state.tip
        return neck_point(tree.keypoints)
    if kp in tree.keypoints:
        return np.asarray(tree.keypoints[kp], dtype=np.float64)
    return None


def enforce_joint_constraints(tree: BodyTree) -> BodyTree:
    """Snap each child's proximal endpoint onto its parent joint.

    Orientation, height and radius are preserved; the keypoints attached
    to moved joints are updated to stay consistent. Idempotent.
    """
    for part in tree.traversal():
        node = tree.nodes[part]
        if node.state is None or part == TORSO:
            continue
        anchor = parent_joint_position(part, tree)
        if anchor is None:
            continue
        state = node.state
        state.base = np.asarray(anchor, dtype=np.float64).copy()
        kp = EDGE_KEYPOINT.get(part)
        if kp is not None:
            tree.keypoints[kp] = state.base.copy()
        dist = DISTAL_KEYPOINT.get(part)
        if dist is not None:
            tree.keypoints[dist] = state.tip
    return tree


# ---------------------------------------------------------------------------
# forward kinematics for the 24-DOF parameterization

# identity torso frame: lateral +x, up +z, forward -y (standing upright)
_TORSO_FRAME0 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])

# DOF vector layout: torso(6), head(2), then (upper, lower) x (L arm, R arm,
# L leg, R leg), 2 angles each
DOF_LAYOUT = (
    (TORSO, 6), (HEAD, 2),
    (L_UPPER_ARM, 2), (L_LOWER_ARM, 2),
    (R_UPPER_ARM, 2), (R_LOWER_ARM, 2),
    (L_UPPER_LEG, 2), (L_LOWER_LEG, 2),
    (R_UPPER_LEG, 2), (R_LOWER_LEG, 2),
)


def limb_direction(ref_frame: np.ndarray, theta_x: float, theta_y: float) -> np.ndarray:
    """Axis direction from two intrinsic rotations of the reference frame."""
    return ref_frame @ (rot_x(theta_x) @ rot_y(theta_y) @ np.array([0.0, 0.0, 1.0]))


def limb_angles(ref_frame: np.ndarray, axis: np.ndarray) -> tuple:
    """Inverse of limb_direction for axes in the reference hemisphere."""
    local = ref_frame.T @ normalize(axis)
    ty = float(np.arcsin(np.clip(local[0], -1.0, 1.0)))
    tx = float(np.arctan2(-local[1], local[2]))
    return tx, ty


def limb_frame(ref_frame: np.ndarray, theta_x: float, theta_y: float) -> np.ndarray:
    return ref_frame @ rot_x(theta_x) @ rot_y(theta_y)


def _upper_ref(torso_frame: np.ndarray) -> np.ndarray:
    # rest direction straight down (-up axis of the torso frame)
    return torso_frame @ rot_x(np.pi / 2.0)


def _head_ref(torso_frame: np.ndarray) -> np.ndarray:
    # rest direction straight up
    return torso_frame @ rot_x(-np.pi / 2.0)


@dataclass
class HumanPose:
    """Full-body pose snapshot: per-part states plus keypoint positions."""

    states: dict
    keypoints: dict
    dofs: np.ndarray

    def cylinders(self) -> dict:
        return {p: s.cylinder() for p, s in self.states.items()}

    def keypoint_array(self) -> np.ndarray:
        return np.stack([self.keypoints[k] for k in range(NUM_KEYPOINTS)])


def pose_from_dofs(dofs, dims: PartDimensions | None = None) -> HumanPose:
    """Forward kinematics: 24-vector -> world cylinders and 17 keypoints."""
    dims = dims or PartDimensions()
    d = np.asarray(dofs, dtype=np.float64)
    if d.shape != (TOTAL_DOF,):
        raise ValueError(f"expected {TOTAL_DOF} dof values, got {d.shape}")

    px, py, pz, tx, ty, tz = d[:6]
    torso_frame = rot_z(tz) @ rot_y(ty) @ rot_x(tx) @ _TORSO_FRAME0
    base = np.array([px, py, pz])
    up = torso_frame[:, 1]
    states = {
        TORSO: KeypartState(
            TORSO, base, up,
            dims.cylinder_height(TORSO), dims.cylinder_radius(TORSO),
            torso_frame,
        )
    }

    keypoints = dict(torso_anchor_points(states[TORSO], dims))
    neck = states[TORSO].tip

    idx = 6
    frames = {}
    for part, _n in DOF_LAYOUT[1:]:
        ax, ay = d[idx], d[idx + 1]
        idx += 2
        if part == HEAD:
            ref = _head_ref(torso_frame)
            origin = neck
        elif PARENT[part] == TORSO:
            ref = _upper_ref(torso_frame)
            origin = keypoints[EDGE_KEYPOINT[part]]
        else:
            ref = frames[PARENT[part]]
            origin = states[PARENT[part]].tip
        frame = limb_frame(ref, ax, ay)
        frames[part] = frame
        axis = frame[:, 2]
        states[part] = KeypartState(
            part, np.asarray(origin, dtype=np.float64), axis,
            dims.cylinder_height(part), dims.cylinder_radius(part),
        )
        distal = DISTAL_KEYPOINT.get(part)
        if distal is not None:
            keypoints[distal] = states[part].tip

    # face keypoints on the head cylinder
    head = states[HEAD]
    h_fwd = frames[HEAD][:, 1] * -1.0  # forward = -y of the head frame
    h_lat = frames[HEAD][:, 0]
    r, h = head.radius, head.height
    c = head.base + head.axis * (0.62 * h)
    keypoints[NOSE] = c + h_fwd * r
    keypoints[L_EYE] = c + head.axis * (0.12 * h) + h_fwd * (0.85 * r) - h_lat * (0.4 * r)
    keypoints[R_EYE] = c + head.axis * (0.12 * h) + h_fwd * (0.85 * r) + h_lat * (0.4 * r)
    keypoints[L_EAR] = c + head.axis * (0.05 * h) - h_lat * r
    keypoints[R_EAR] = c + head.axis * (0.05 * h) + h_lat * r

    return HumanPose(states, keypoints, d.copy())


def rest_dofs(position=(0.0, 0.0, 0.0), heading: float = 0.0) -> np.ndarray:
    """Neutral standing pose at a world position with a yaw heading."""
    d = np.zeros(TOTAL_DOF)
    d[0:3] = position
    d[5] = heading
    return d
