"""Active-vision scheduling of pan-tilt viewpoints.

Cameras are steered to maximize a discounted sum of log survival
probabilities, sum_m gamma^m * ln(1 - p_collide[m]), over a short
horizon. The collision probability per keypart is a Gaussian-clearance
surrogate, exp(-clearance^2 / (2 sigma^2)), where sigma is the part's
positional uncertainty: it grows while a part goes unobserved and resets
when some camera has it in view. Observing high-risk parts therefore
lowers future p_collide, which is what the objective rewards, so the
planner turns cameras toward the regions of highest collision risk.

Small candidate spaces are searched exhaustively over whole command
sequences (jointly across cameras); larger ones use a per-step greedy
joint search, guarded to never score below holding still. Holding the
current angles is always a candidate and wins ties.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .geometry import segment_segment_distance_batch

P_CAP = 1.0 - 1e-9


@dataclass(frozen=True)
class SchedulerParams:
    horizon: int = 3           # M: intervals 0..M inclusive
    gamma: float = 0.9
    interval: float = 0.4      # seconds per planning step
    grid_pan: int = 7
    grid_tilt: int = 5
    growth: float = 0.1        # sigma growth in m/s while unobserved
    sigma_obs: float = 0.02    # sigma right after an observation
    sigma_cap: float = 1.0
    exhaustive_limit: int = 2000


@dataclass
class CollisionEstimate:
    """Clearances and surrogate collision probabilities per interval/part."""

    parts: list                      # part ids, column order of the matrices
    clearances: np.ndarray           # (M+1, P) min robot distance per interval
    sigmas: np.ndarray               # (P,) current positional uncertainty
    p_collide: np.ndarray            # (M+1, P) baseline probabilities


@dataclass
class ViewpointTrajectory:
    """Per-camera (pan, tilt) command sequences over the horizon."""

    commands: dict                   # rig id -> [(pan, tilt), ...] length M+1
    objective: float
    mode: str = "greedy"


def collision_probability(clearance, sigma) -> np.ndarray:
    """Gaussian-clearance surrogate, capped just below 1."""
    clearance = np.asarray(clearance, dtype=np.float64)
    sigma = np.maximum(np.asarray(sigma, dtype=np.float64), 1e-9)
    p = np.exp(-(clearance ** 2) / (2.0 * sigma ** 2))
    return np.minimum(p, P_CAP)


def combine_parts(p_parts: np.ndarray) -> float:
    """Any-part collision probability assuming part independence."""
    return float(min(1.0 - np.prod(1.0 - np.asarray(p_parts)), P_CAP))


def objective_value(p_hats, gamma: float) -> float:
    """sum_m gamma^m * ln(1 - p_hat[m]); p_hat clamped below 1."""
    total = 0.0
    for m, p in enumerate(p_hats):
        total += (gamma ** m) * float(np.log(1.0 - min(float(p), P_CAP)))
    return total


def estimate_collision(part_cylinders: dict, sigmas: dict, robot_links_at,
                       params: SchedulerParams, t0: float = 0.0) -> CollisionEstimate:
    """Clearance and baseline collision probability per planning interval.

    ``robot_links_at(t)`` yields the robot link cylinders at time t; the
    clearance over interval m is evaluated against the links at both
    interval endpoints. Keypart poses are held at the current estimate.
    """
    parts = sorted(part_cylinders)
    p = len(parts)
    m1 = params.horizon + 1
    part_base = np.stack([part_cylinders[j].base for j in parts])
    part_top = np.stack([part_cylinders[j].top for j in parts])
    part_r = np.array([part_cylinders[j].radius for j in parts])

    clearances = np.full((m1, p), 1e9)
    for m in range(m1):
        links = list(robot_links_at(t0 + m * params.interval))
        links += list(robot_links_at(t0 + (m + 1) * params.interval))
        if not links:
            continue
        link_base = np.stack([l.base for l in links])
        link_top = np.stack([l.top for l in links])
        link_r = np.array([l.radius for l in links])
        dist = segment_segment_distance_batch(part_base, part_top, link_base, link_top)
        gap = dist - part_r[:, None] - link_r[None, :]
        clearances[m] = np.maximum(gap.min(axis=1), 0.0)
    sig = np.array([sigmas[part] for part in parts], dtype=np.float64)
    p_col = collision_probability(clearances, sig[None, :])
    return CollisionEstimate(parts, clearances, sig, p_col)


def _axis_points(lo: float, hi: float, n: int) -> np.ndarray:
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, n)


def _candidate_grid(rig, params: SchedulerParams) -> list:
    pans = _axis_points(rig.pan_limits[0], rig.pan_limits[1], params.grid_pan)
    tilts = _axis_points(rig.tilt_limits[0], rig.tilt_limits[1], params.grid_tilt)
    return [(float(p), float(t)) for p in pans for t in tilts]


QUALITY_CORE = 0.7  # fraction of the half-extent giving a full-quality view


def _view_quality_row(rig, orientation, positions: np.ndarray) -> np.ndarray:
    """Observation quality in [0, 1] per estimated part position.

    1 inside the central portion of the image, tapering to 0 at the rim
    and outside. Centered views reset uncertainty fully, grazing views
    only partially, so the planner prefers bringing high-risk parts
    toward the FOV center rather than merely inside the frame.
    """
    pose = rig.world_pose(*orientation)
    cam = pose.inverse().apply(positions)
    k = rig.intrinsics
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * cam[:, 0] / z + k.cx
        v = k.fy * cam[:, 1] / z + k.cy
    du = np.abs(u - (k.width - 1) / 2.0) / (k.width / 2.0)
    dv = np.abs(v - (k.height - 1) / 2.0) / (k.height / 2.0)
    off = np.maximum(du, dv)
    q = np.clip((1.0 - off) / (1.0 - QUALITY_CORE), 0.0, 1.0)
    return np.where(z > 0.05, q, 0.0)


class _CameraTable:
    """Per-camera candidate orientations with cached visibility rows."""

    def __init__(self, rig, params: SchedulerParams, positions: np.ndarray):
        self.rig = rig
        self.reach = rig.max_rate * params.interval + 1e-12
        self.hold = (rig.pan, rig.tilt)
        self.orientations = [self.hold] + [
            o for o in _candidate_grid(rig, params) if o != self.hold
        ]
        self.vis = np.stack([
            _view_quality_row(rig, o, positions) for o in self.orientations
        ])
        self.index = {o: i for i, o in enumerate(self.orientations)}

    def reachable_from(self, orientation) -> list:
        """Candidate indices reachable in one step; index of ``orientation`` first."""
        p0, t0 = orientation
        out = []
        for i, (p, t) in enumerate(self.orientations):
            if abs(p - p0) <= self.reach and abs(t - t0) <= self.reach:
                out.append(i)
        cur = self.index.get(orientation)
        if cur is not None and cur in out:
            out.remove(cur)
            out.insert(0, cur)
        return out


def _advance_sigma(sig, quality, params: SchedulerParams):
    """Grow unobserved uncertainty; blend toward sigma_obs by view quality."""
    grown = np.minimum(sig + params.growth * params.interval, params.sigma_cap)
    return grown + quality * (params.sigma_obs - grown)


def _interval_term(clearance_row, sig) -> float:
    p = collision_probability(clearance_row, sig)
    return float(np.log(1.0 - combine_parts(p)))


def plan(rigs, estimate: CollisionEstimate, part_positions: dict,
         params: SchedulerParams) -> ViewpointTrajectory:
    """Choose pan-tilt command sequences maximizing the discounted objective.

    With no tracked parts, or no strictly better candidate, every camera
    holds its current angles (the documented tie-break).
    """
    m1 = params.horizon + 1
    hold = {rig.rig_id: [(rig.pan, rig.tilt)] * m1 for rig in rigs}
    if not estimate.parts or not rigs:
        return ViewpointTrajectory(hold, 0.0, "hold")

    positions = np.stack([part_positions[p] for p in estimate.parts])
    tables = [_CameraTable(rig, params, positions) for rig in rigs]

    branching = np.prod([len(t.reachable_from(t.hold)) for t in tables],
                        dtype=np.float64)
    if branching ** m1 <= params.exhaustive_limit:
        seq, value = _exhaustive(tables, estimate, params, m1)
        mode = "exhaustive"
    else:
        seq, value = _greedy(tables, estimate, params, m1)
        hold_seq = tuple(tuple(t.index[t.hold] for t in tables) for _ in range(m1))
        hold_value = _sequence_value(hold_seq, tables, estimate, params)
        if value <= hold_value:
            seq, value = hold_seq, hold_value
        mode = "greedy"

    commands = {
        rig.rig_id: [tables[c].orientations[step[c]] for step in seq]
        for c, rig in enumerate(rigs)
    }
    return ViewpointTrajectory(commands, value, mode)


def _sequence_value(seq, tables, estimate, params) -> float:
    sig = estimate.sigmas.copy()
    total = 0.0
    for m, joint in enumerate(seq):
        quality = np.zeros(len(estimate.parts))
        for table, idx in zip(tables, joint):
            quality = np.maximum(quality, table.vis[idx])
        sig = _advance_sigma(sig, quality, params)
        total += (params.gamma ** m) * _interval_term(estimate.clearances[m], sig)
    return float(total)


def _exhaustive(tables, estimate, params, m1):
    """Depth-first search over all rate-feasible joint sequences."""
    best = {"seq": None, "value": -np.inf}

    def recurse(step, current, sig, acc, prefix):
        if step == m1:
            # strict improvement keeps the all-hold prefix on ties
            if acc > best["value"] + 1e-15:
                best["seq"] = tuple(prefix)
                best["value"] = acc
            return
        options = [t.reachable_from(cur) for t, cur in zip(tables, current)]
        for joint in itertools.product(*options):
            quality = np.zeros(len(estimate.parts))
            for table, idx in zip(tables, joint):
                quality = np.maximum(quality, table.vis[idx])
            sig2 = _advance_sigma(sig, quality, params)
            term = (params.gamma ** step) * _interval_term(
                estimate.clearances[step], sig2)
            nxt = tuple(tables[c].orientations[joint[c]] for c in range(len(tables)))
            recurse(step + 1, nxt, sig2, acc + term, prefix + [joint])

    start = tuple(t.hold for t in tables)
    recurse(0, start, estimate.sigmas.copy(), 0.0, [])
    return best["seq"], float(best["value"])


def _greedy(tables, estimate, params, m1):
    """Per-step joint argmax over the candidate product, sigma carried forward.

    The product over cameras is evaluated with one broadcast per step;
    option index 0 is always "stay", so np.argmax's first-maximum rule
    makes ties prefer not moving.
    """
    sig = estimate.sigmas.copy()
    current = [t.hold for t in tables]
    seq = []
    total = 0.0
    n_parts = len(estimate.parts)
    for m in range(m1):
        option_idx = [t.reachable_from(cur) for t, cur in zip(tables, current)]
        quality = np.zeros((1,) * len(tables) + (n_parts,))
        for c, (table, idx) in enumerate(zip(tables, option_idx)):
            shape = [1] * len(tables) + [n_parts]
            shape[c] = len(idx)
            quality = np.maximum(quality, table.vis[idx].reshape(shape))
        sig2 = _advance_sigma(sig, quality, params)
        p = collision_probability(estimate.clearances[m], sig2)
        p_joint = np.minimum(1.0 - np.prod(1.0 - p, axis=-1), P_CAP)
        terms = np.log(1.0 - p_joint)
        flat = int(np.argmax(terms))
        joint_pos = np.unravel_index(flat, terms.shape)
        joint = tuple(option_idx[c][joint_pos[c]] for c in range(len(tables)))
        seq.append(joint)
        total += (params.gamma ** m) * float(terms[joint_pos])
        sig = sig2[joint_pos]
        current = [tables[c].orientations[joint[c]] for c in range(len(tables))]
    return tuple(seq), float(total)
