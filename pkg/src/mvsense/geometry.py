"""Camera models, rigid transforms, and ray/cylinder geometry.

Conventions used throughout the package:

  - All lengths are meters, all angles radians.
  - World frame: right-handed, z up.
  - Camera frame: x right, y down, z forward (camera looks along +z).
  - Image plane: pixel origin at the top-left corner, u right, v down.
  - A camera pose is the camera-to-world transform; projecting a world
    point applies the inverse.

Intrinsics carry distinct fx/fy, but mask-width math uses a single
scalar focal length, so simulator-generated cameras are required to
have square pixels (fx == fy); see ``Intrinsics.focal``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ORTHO_TOL = 1e-9


class BehindCamera(ValueError):
    """Point has non-positive depth in the camera frame."""


class InvalidDepth(ValueError):
    """Depth value is non-positive or non-finite."""


def _as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics plus image size in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def focal(self) -> float:
        """Single scalar focal length; requires square pixels."""
        if abs(self.fx - self.fy) > 1e-9:
            raise ValueError("scalar focal length requires fx == fy")
        return self.fx

    def contains(self, pixel) -> bool:
        u, v = float(pixel[0]), float(pixel[1])
        return 0.0 <= u < self.width and 0.0 <= v < self.height


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation; composition and inversion are closed."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = _as_vec3(self.translation)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-8):
            raise ValueError("rotation must be orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must be proper (det +1)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return RigidTransform(m[:3, :3], m[:3, 3])

    @classmethod
    def _trusted(cls, rotation: np.ndarray, translation: np.ndarray) -> "RigidTransform":
        """Skip validation for rotations produced by closed operations."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "rotation", rotation)
        object.__setattr__(obj, "translation", translation)
        return obj

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) array."""
        p = np.asarray(points, dtype=np.float64)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def apply_vector(self, vec: np.ndarray) -> np.ndarray:
        """Rotate a direction (no translation)."""
        v = np.asarray(vec, dtype=np.float64)
        if v.ndim == 1:
            return self.rotation @ v
        return v @ self.rotation.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Returns self ∘ other (apply ``other`` first)."""
        return RigidTransform._trusted(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = np.ascontiguousarray(self.rotation.T)
        return RigidTransform._trusted(rt, -rt @ self.translation)


@dataclass(frozen=True)
class Cylinder:
    """Finite cylinder: base point, unit axis, height and radius."""

    base: np.ndarray
    axis: np.ndarray
    height: float
    radius: float

    def __post_init__(self):
        b = _as_vec3(self.base)
        a = _as_vec3(self.axis)
        if abs(np.linalg.norm(a) - 1.0) > _ORTHO_TOL:
            raise ValueError("axis must be a unit vector")
        if self.height <= 0 or self.radius <= 0:
            raise ValueError("height and radius must be positive")
        object.__setattr__(self, "base", b)
        object.__setattr__(self, "axis", a)

    @staticmethod
    def from_endpoints(p0, p1, radius: float) -> "Cylinder":
        p0 = _as_vec3(p0)
        p1 = _as_vec3(p1)
        d = p1 - p0
        h = float(np.linalg.norm(d))
        if h <= 0:
            raise ValueError("endpoints must be distinct")
        return Cylinder(p0, d / h, h, radius)

    @property
    def top(self) -> np.ndarray:
        return self.base + self.axis * self.height

    @property
    def midpoint(self) -> np.ndarray:
        return self.base + self.axis * (0.5 * self.height)

    def contains(self, points: np.ndarray, radial_margin: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the (optionally inflated) cylinder."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64)) - self.base
        ax = p @ self.axis
        radial2 = np.einsum("ij,ij->i", p, p) - ax * ax
        r = self.radius + radial_margin
        return (ax >= 0.0) & (ax <= self.height) & (radial2 <= r * r)


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation taking unit vector a onto unit vector b."""
    a = normalize(a)
    b = normalize(b)
    c = float(np.dot(a, b))
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        # 180 degrees: rotate about any axis perpendicular to a
        perp = perpendicular_unit(a)
        return 2.0 * np.outer(perp, perp) - np.eye(3)
    v = np.cross(a, b)
    vx = np.array(
        [[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]], dtype=np.float64
    )
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def perpendicular_unit(a: np.ndarray) -> np.ndarray:
    """Deterministic unit vector perpendicular to a."""
    a = normalize(a)
    helper = np.array([1.0, 0.0, 0.0])
    if abs(a[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    return normalize(np.cross(a, helper))


def frame_from_axis(axis: np.ndarray) -> np.ndarray:
    """Right-handed orthonormal frame (columns) with z along ``axis``."""
    z = normalize(axis)
    x = perpendicular_unit(z)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


# ---------------------------------------------------------------------------
# projection


def project(point_world, pose: RigidTransform, k: Intrinsics):
    """Project a world point; returns ((u, v), depth).

    ``pose`` is the camera-to-world transform. Raises BehindCamera when the
    camera-frame z is non-positive.
    """
    p_cam = pose.inverse().apply(_as_vec3(point_world))
    z = p_cam[2]
    if z <= 0:
        raise BehindCamera(f"point at camera depth {z:.6f}")
    u = k.fx * p_cam[0] / z + k.cx
    v = k.fy * p_cam[1] / z + k.cy
    return np.array([u, v]), float(z)


def project_many(points_world: np.ndarray, pose: RigidTransform, k: Intrinsics):
    """Vectorized projection of (N, 3) world points.

    Returns (pixels (N, 2), depths (N,)); rows with depth <= 0 get NaN pixels.
    """
    p_cam = pose.inverse().apply(points_world)
    z = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * p_cam[:, 0] / z + k.cx
        v = k.fy * p_cam[:, 1] / z + k.cy
    px = np.column_stack([u, v])
    px[z <= 0] = np.nan
    return px, z


def reproject(pixel, depth: float, k: Intrinsics) -> np.ndarray:
    """Back-project a pixel with known depth to the camera frame (Kinv route)."""
    if not np.isfinite(depth) or depth <= 0:
        raise InvalidDepth(f"depth {depth!r}")
    u, v = float(pixel[0]), float(pixel[1])
    return np.array(
        [depth * (u - k.cx) / k.fx, depth * (v - k.cy) / k.fy, depth]
    )


def reproject_many(pixels: np.ndarray, depths: np.ndarray, k: Intrinsics) -> np.ndarray:
    """Vectorized back-projection of (N, 2) pixels with (N,) depths."""
    pixels = np.asarray(pixels, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    x = depths * (pixels[:, 0] - k.cx) / k.fx
    y = depths * (pixels[:, 1] - k.cy) / k.fy
    return np.column_stack([x, y, depths])


# ---------------------------------------------------------------------------
# ray / cylinder intersection


def ray_cylinder_hits(origins: np.ndarray, dirs: np.ndarray, cyl: Cylinder) -> np.ndarray:
    """Smallest positive ray parameter t per ray against a finite cylinder.

    Lateral surface and both caps count as surface. Directions need not be
    unit length (t is in units of ``dirs``). Misses return +inf.
    """
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64)) - cyl.base
    d = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    if o.shape[0] == 1 and d.shape[0] > 1:
        o = np.broadcast_to(o, d.shape)
    a = cyl.axis
    r2 = cyl.radius * cyl.radius
    h = cyl.height

    od = o @ a
    dd = d @ a
    # components perpendicular to the axis
    o_perp = o - np.outer(od, a)
    d_perp = d - np.outer(dd, a)

    qa = np.einsum("ij,ij->i", d_perp, d_perp)
    qb = 2.0 * np.einsum("ij,ij->i", o_perp, d_perp)
    qc = np.einsum("ij,ij->i", o_perp, o_perp) - r2

    best = np.full(o.shape[0], np.inf)

    disc = qb * qb - 4.0 * qa * qc
    valid = (disc >= 0) & (qa > 1e-16)
    sq = np.sqrt(np.where(valid, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for sign in (-1.0, 1.0):
            t = (-qb + sign * sq) / (2.0 * qa)
            ax = od + t * dd
            ok = valid & (t > 1e-12) & (ax >= 0.0) & (ax <= h)
            best = np.where(ok & (t < best), t, best)

    # caps at axial coordinate 0 and h
    moving = np.abs(dd) > 1e-16
    with np.errstate(divide="ignore", invalid="ignore"):
        for plane in (0.0, h):
            t = (plane - od) / np.where(moving, dd, 1.0)
            hit = o + t[:, None] * d
            ax_hit = hit @ a
            radial2 = np.einsum("ij,ij->i", hit, hit) - ax_hit * ax_hit
            ok = moving & (t > 1e-12) & (radial2 <= r2)
            best = np.where(ok & (t < best), t, best)

    return best


def ray_cylinder_intersect(origin, direction, cyl: Cylinder):
    """Nearest hit distance of a unit-direction ray, or None on a miss."""
    d = _as_vec3(direction)
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise ValueError("direction must be a unit vector")
    t = ray_cylinder_hits(_as_vec3(origin)[None, :], d[None, :], cyl)[0]
    return float(t) if np.isfinite(t) else None


# ---------------------------------------------------------------------------
# segment / segment distance (used for collision clearance)


def segment_segment_distance_batch(p0, p1, q0, q1) -> np.ndarray:
    """Pairwise minimum distances between segment sets, shape (N, M).

    Coordinate descent on the convex quadratic over [0,1]^2; a few rounds
    converge to the box-constrained optimum (parallel segments give a
    flat optimum where any fixed point is exact).
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=np.float64))
    p1 = np.atleast_2d(np.asarray(p1, dtype=np.float64))
    q0 = np.atleast_2d(np.asarray(q0, dtype=np.float64))
    q1 = np.atleast_2d(np.asarray(q1, dtype=np.float64))
    u = p1 - p0                                   # (N, 3)
    v = q1 - q0                                   # (M, 3)
    w = p0[:, None, :] - q0[None, :, :]           # (N, M, 3)
    a = np.einsum("ij,ij->i", u, u)[:, None]      # (N, 1)
    b = u @ v.T                                   # (N, M)
    c = np.einsum("ij,ij->i", v, v)[None, :]      # (1, M)
    d = np.einsum("ik,ijk->ij", u, w)             # (N, M)
    e = np.einsum("jk,ijk->ij", v, w)             # (N, M)
    denom = a * c - b * b

    s = np.where(denom > 1e-14, (b * e - c * d) / np.where(denom > 1e-14, denom, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    for _ in range(4):
        t = np.where(c > 1e-14, (b * s + e) / np.where(c > 1e-14, c, 1.0), 0.0)
        t = np.clip(t, 0.0, 1.0)
        s = np.where(a > 1e-14, (b * t - d) / np.where(a > 1e-14, a, 1.0), 0.0)
        s = np.clip(s, 0.0, 1.0)
    diff = (p0[:, None, :] + s[..., None] * u[:, None, :]) \
        - (q0[None, :, :] + t[..., None] * v[None, :, :])
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def segment_segment_distance(p0, p1, q0, q1) -> float:
    """Minimum distance between segments [p0, p1] and [q0, q1]."""
    p0, p1, q0, q1 = (_as_vec3(x) for x in (p0, p1, q0, q1))
    return float(segment_segment_distance_batch(p0[None], p1[None],
                                                q0[None], q1[None])[0, 0])


def cylinder_clearance(c1: Cylinder, c2: Cylinder) -> float:
    """Surface-to-surface clearance between two cylinders, floored at 0.

    Approximates each cylinder by its axis segment plus radius; exact for
    laterally-facing configurations, slightly conservative near caps.
    """
    d = segment_segment_distance(c1.base, c1.top, c2.base, c2.top)
    return max(0.0, d - c1.radius - c2.radius)
