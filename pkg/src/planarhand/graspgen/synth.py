"""Heuristic grasp synthesis: sample surface contacts, test force closure,
pose the object, assign fingers via analytic IK, reject collisions.

With n fingers, up to n contacts are realized by fingertips; an (n+1)-th
contact is realized by the palm, which constrains the object pose so that
contact rests on the palm surface with its push direction pointing up.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from ..sim2d.config import SimConfig
from ..sim2d.geometry import Disk
from ..sim2d.kinematics import finger_ik, hand_joint_points, wrap_angle, IK_APPROACH_OFFSETS
from .cache import Grasp
from .force import grasp_analysis
from .surface import draw_arity, sample_surface


class SynthesisError(RuntimeError):
    """Grasp synthesis exhausted its attempt budget."""


@dataclass
class GraspGenParams:
    f_thresh: float = 0.05
    metric_weights: tuple = (0.3, 1.0)
    pose_box: tuple = ((-0.05, 0.05), (0.045, 0.105))
    rrt_delta: float = 0.2
    capture_dist: float = 0.03
    duplicate_dist: float = 1e-3
    max_attempts: int = 1_000_000
    palm_normal_jitter: float = 0.15
    # open postures tried for fingers that carry no contact, per 3-joint finger
    rest_candidates: tuple = (
        (2.2, 0.5, 0.3),
        (0.94, -0.5, -0.3),
        (2.6, 0.3, 0.2),
        (0.54, -0.3, -0.2),
        (0.25, -0.05, -0.05),
        (2.89, 0.05, 0.05),
    )


def _pose_transform(pose, px, py):
    x, y, th = pose
    c, s = math.cos(th), math.sin(th)
    return x + c * px - s * py, y + s * px + c * py


def _pose_rotate(pose, nx, ny):
    th = pose[2]
    c, s = math.cos(th), math.sin(th)
    return c * nx - s * ny, s * nx + c * ny


def random_pose(shape, contacts, cfg: SimConfig, params: GraspGenParams, rng):
    """Object pose for a contact set; returns (pose, palm_contact_index).

    With more contacts than fingers, one contact is delegated to the palm:
    the pose is chosen so that contact touches the palm top with its inward
    normal pointing (approximately) up.
    """
    n_contacts = len(contacts)
    if n_contacts <= cfg.n_fingers:
        (x0, x1), (y0, y1) = params.pose_box
        pose = (
            float(rng.uniform(x0, x1)),
            float(rng.uniform(y0, y1)),
            float(rng.uniform(-math.pi, math.pi)),
        )
        return pose, None
    if n_contacts > cfg.n_fingers + 1:
        return None, None
    palm_idx = int(rng.integers(0, n_contacts))
    (px, py), (nx, ny) = contacts[palm_idx]
    # rotate so the inward normal points up (+y), with a little jitter
    th = wrap_angle(
        math.pi / 2.0
        - math.atan2(ny, nx)
        + float(rng.uniform(-params.palm_normal_jitter, params.palm_normal_jitter))
    )
    (p0x, _), (p1x, _) = cfg.palm_segment
    margin = 0.015
    cx = float(rng.uniform(p0x + margin, p1x - margin))
    c, s = math.cos(th), math.sin(th)
    wx, wy = c * px - s * py, s * px + c * py
    pose = (cx - wx, cfg.palm_radius - wy, th)
    return pose, palm_idx


def _hand_circle_list(cfg: SimConfig, q):
    """(finger, x, y, radius, is_tip) collision circles for the whole hand."""
    out = []
    for f, pts in enumerate(hand_joint_points(cfg, q)):
        jpf = cfg.joints_per_finger
        for k in range(1, jpf + 1):
            r = cfg.fingertip_radius if k == jpf else cfg.link_radius
            out.append((f, pts[k][0], pts[k][1], r, k == jpf))
        x0, y0 = pts[0]
        x1, y1 = pts[1]
        out.append((f, (x0 + x1) / 2.0, (y0 + y1) / 2.0, cfg.link_radius, False))
    return out


def check_collision_free(cfg: SimConfig, shape, pose, q, max_pen: float = 1e-4):
    """Hand at q with the object at pose: nothing penetrates beyond max_pen.

    Touching (distance == radius) is allowed; that is what contacts are.
    """
    inv = _world_to_obj_fn(pose)
    for f, x, y, r, _ in _hand_circle_list(cfg, q):
        lx, ly = inv(x, y)
        if shape.signed_distance(lx, ly) < r - max_pen:
            return False, f"finger {f} circle penetrates object"
    # object vs palm capsule
    (p0x, p0y), (p1x, p1y) = cfg.palm_segment
    ex, ey = p1x - p0x, p1y - p0y
    el2 = ex * ex + ey * ey
    if isinstance(shape, Disk):
        t = ((pose[0] - p0x) * ex + (pose[1] - p0y) * ey) / el2
        t = min(1.0, max(0.0, t))
        d = math.hypot(pose[0] - (p0x + t * ex), pose[1] - (p0y + t * ey))
        if d < shape.radius + cfg.palm_radius - max_pen:
            return False, "object penetrates palm"
    else:
        for vx, vy in shape.vertices:
            wx, wy = _pose_transform(pose, vx, vy)
            t = ((wx - p0x) * ex + (wy - p0y) * ey) / el2
            t = min(1.0, max(0.0, t))
            d = math.hypot(wx - (p0x + t * ex), wy - (p0y + t * ey))
            if d < cfg.palm_radius - max_pen:
                return False, "object penetrates palm"
    # finger vs finger
    circles = _hand_circle_list(cfg, q)
    for i in range(len(circles)):
        fa, xa, ya, ra, _ = circles[i]
        for j in range(i + 1, len(circles)):
            fb, xb, yb, rb, _ = circles[j]
            if fa == fb:
                continue
            if math.hypot(xa - xb, ya - yb) < ra + rb - max_pen:
                return False, f"fingers {fa} and {fb} collide"
    return True, ""


def _world_to_obj_fn(pose):
    x, y, th = pose
    c, s = math.cos(th), math.sin(th)

    def inv(wx, wy):
        dx, dy = wx - x, wy - y
        return c * dx + s * dy, -s * dx + c * dy

    return inv


def assign_fingers(cfg: SimConfig, shape, pose, contacts, palm_idx, params, lo, hi):
    """Finger configuration realizing the contact set, or None.

    Finger contacts are matched in x-order (no crossing); each finger's tip
    is placed just off the surface point along the inward normal, pushing
    along its last link. Contact-free fingers take the first collision-free
    rest posture.
    """
    world = [
        (_pose_transform(pose, p[0], p[1]), _pose_rotate(pose, n[0], n[1]))
        for p, n in contacts
    ]
    finger_items = [w for i, w in enumerate(world) if i != palm_idx]
    if len(finger_items) > cfg.n_fingers:
        return None
    # tips must sit above the palm plane; palm-side contacts are unreachable
    for (px, py), (nx, ny) in finger_items:
        if py - ny * cfg.fingertip_radius < cfg.palm_radius * 0.5:
            return None
    order = sorted(range(len(finger_items)), key=lambda i: finger_items[i][0][0])
    items = [finger_items[i] for i in order]

    jpf = cfg.joints_per_finger
    for combo in itertools.combinations(range(cfg.n_fingers), len(items)):
        q = [None] * cfg.n_fingers
        ok = True
        for finger, ((px, py), (nx, ny)) in zip(combo, items):
            tx = px - nx * cfg.fingertip_radius
            ty = py - ny * cfg.fingertip_radius
            push = math.atan2(ny, nx)
            sol = None
            for off in IK_APPROACH_OFFSETS:
                sol = finger_ik(cfg, finger, tx, ty, push + off, lo, hi)
                if sol is not None:
                    break
            if sol is None:
                ok = False
                break
            q[finger] = sol
        if not ok:
            continue
        free = [f for f in range(cfg.n_fingers) if q[f] is None]
        full = _fill_free_fingers(cfg, shape, pose, q, free, params, lo, hi)
        if full is not None:
            return full
    return None


def _fill_free_fingers(cfg, shape, pose, q, free, params, lo, hi):
    inv = _world_to_obj_fn(pose)
    jpf = cfg.joints_per_finger

    def finger_clear(f, angles):
        pts = [(cfg.finger_base_xs[f], 0.0)]
        x, y, phi = cfg.finger_base_xs[f], 0.0, 0.0
        for L, a in zip(cfg.link_lengths, angles):
            phi += a
            x += L * math.cos(phi)
            y += L * math.sin(phi)
            pts.append((x, y))
        for k in range(1, jpf + 1):
            r = cfg.fingertip_radius if k == jpf else cfg.link_radius
            lx, ly = inv(*pts[k])
            if shape.signed_distance(lx, ly) < r + 2e-3:
                return False
        return True

    for f in free:
        placed = False
        for cand in params.rest_candidates:
            base = f * jpf
            if all(lo[base + i] <= cand[i] <= hi[base + i] for i in range(jpf)):
                if finger_clear(f, cand):
                    q[f] = list(cand)
                    placed = True
                    break
        if not placed:
            return None
    return [v for finger_q in q for v in finger_q]


def heuristic_sample(
    cfg: SimConfig,
    shape,
    n_grasps: int,
    rng,
    params: GraspGenParams | None = None,
    existing=None,
):
    """HeuristicSample loop: surface draw, force test, pose, IK, collisions.

    Returns n_grasps validated grasps; raises SynthesisError when the
    attempt budget runs out first.
    """
    params = params or GraspGenParams()
    if n_grasps < 1:
        raise ValueError("n_grasps must be >= 1")
    lo, hi = cfg.joint_limits()
    out = []
    attempts = 0
    from .cache import GraspCache  # local import: cache imports synth for validation

    probe = existing if existing is not None else GraspCache("tmp", shape, params.metric_weights, params.f_thresh)
    while len(out) < n_grasps:
        attempts += 1
        if attempts > params.max_attempts:
            raise SynthesisError(
                f"grasp synthesis exhausted {params.max_attempts} attempts on "
                f"{getattr(shape, 'kind', 'shape')} ({len(out)}/{n_grasps} found)"
            )
        arity = draw_arity(rng)
        contacts = sample_surface(shape, arity, rng)
        if not grasp_analysis([p for p, _ in contacts], [n for _, n in contacts], params.f_thresh):
            continue
        pose, palm_idx = random_pose(shape, contacts, cfg, params, rng)
        if pose is None:
            continue
        q = assign_fingers(cfg, shape, pose, contacts, palm_idx, params, lo, hi)
        if q is None:
            continue
        ok, _ = check_collision_free(cfg, shape, pose, q)
        if not ok:
            continue
        grasp = Grasp(q=q, p=pose, contacts=list(contacts), parent=None)
        if probe.min_distance(grasp) < params.duplicate_dist:
            continue
        probe.append(grasp)
        out.append(grasp)
    return out
