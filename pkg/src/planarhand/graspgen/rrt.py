"""Grasp-space RRT expansion and the top-level cache generator."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..sim2d.config import SimConfig
from ..sim2d.geometry import Disk
from ..sim2d.kinematics import (
    finger_ik_candidates,
    hand_joint_points,
    nearest_ik,
    wrap_angle,
)
from .cache import Grasp, GraspCache, grasp_distance
from .force import grasp_analysis, net_force_min
from .synth import (
    GraspGenParams,
    check_collision_free,
    heuristic_sample,
    _world_to_obj_fn,
    _pose_transform,
)


@dataclass
class RrtStats:
    iterations: int = 0
    added: int = 0
    rejected_ik: int = 0
    rejected_contacts: int = 0
    rejected_force: int = 0
    rejected_collision: int = 0
    rejected_duplicate: int = 0
    rejected_step: int = 0


def _random_grasp_sample(cfg: SimConfig, params: GraspGenParams, rng, cache=None):
    """Uniform draws over joints x pose box, mixed with local perturbations
    of existing grasps. Pure uniform sampling almost never lands near the
    contact manifold, so half the draws explore around the current set."""
    lo, hi = cfg.joint_limits()
    if cache is not None and len(cache) > 0 and rng.uniform() < 0.5:
        base = cache.grasps[int(rng.integers(0, len(cache)))]
        q = [
            min(h, max(l, v + float(rng.normal(0.0, 0.35))))
            for v, l, h in zip(base.q, lo, hi)
        ]
        p = (
            base.p[0] + float(rng.normal(0.0, 0.02)),
            base.p[1] + float(rng.normal(0.0, 0.02)),
            wrap_angle(base.p[2] + float(rng.normal(0.0, 0.4))),
        )
        return Grasp(q=q, p=p, contacts=[])
    q = [float(rng.uniform(a, b)) for a, b in zip(lo, hi)]
    (x0, x1), (y0, y1) = params.pose_box
    p = (
        float(rng.uniform(x0, x1)),
        float(rng.uniform(y0, y1)),
        float(rng.uniform(-math.pi, math.pi)),
    )
    return Grasp(q=q, p=p, contacts=[])


def _interpolate(a: Grasp, b: Grasp, t: float) -> Grasp:
    """Move from a toward b by fraction t (angle-aware for theta)."""
    q = [qa + t * (qb - qa) for qa, qb in zip(a.q, b.q)]
    dx = b.p[0] - a.p[0]
    dy = b.p[1] - a.p[1]
    dth = wrap_angle(b.p[2] - a.p[2])
    p = (a.p[0] + t * dx, a.p[1] + t * dy, wrap_angle(a.p[2] + t * dth))
    return Grasp(q=q, p=p, contacts=[])


def fix_contact_and_collision(
    cfg: SimConfig, shape, grasp: Grasp, params: GraspGenParams
):
    """Project fingertips within capture range onto the object surface,
    re-run IK, collect the realized contact set (palm included), and
    validate force closure plus collision freedom.

    Returns (repaired grasp, reason) with grasp None on failure.
    """
    lo, hi = cfg.joint_limits()
    pose = _snap_to_palm(cfg, shape, grasp.p, snap_dist=4e-3)
    inv = _world_to_obj_fn(pose)
    chains = hand_joint_points(cfg, grasp.q)
    jpf = cfg.joints_per_finger
    q = list(grasp.q)
    contacts = []
    free = []  # (gap, finger) for fingers left out of the contact set

    def attach(f):
        tip_now_pts, _ = _finger_pts(cfg, f, q[f * jpf : (f + 1) * jpf])
        tip = tip_now_pts[-1]
        lx, ly = inv(*tip)
        (bx, by), (onx, ony) = shape.closest_boundary_point(lx, ly)
        wx, wy = _pose_transform(pose, bx, by)
        c, s = math.cos(pose[2]), math.sin(pose[2])
        nx, ny = -(c * onx - s * ony), -(s * onx + c * ony)
        tx = wx - nx * cfg.fingertip_radius
        ty = wy - ny * cfg.fingertip_radius
        push = math.atan2(ny, nx)
        cands = finger_ik_candidates(cfg, f, tx, ty, push, lo, hi)
        cands = [c_ for c_ in cands if _finger_clear_of_object(cfg, shape, inv, f, c_)]
        sol = nearest_ik(cands, grasp.q[f * jpf : (f + 1) * jpf])
        if sol is None:
            return False
        q[f * jpf : (f + 1) * jpf] = sol
        contacts.append(((bx, by), (-onx, -ony)))
        return True

    for f in range(cfg.n_fingers):
        tip = chains[f][-1]
        lx, ly = inv(*tip)
        gap = shape.signed_distance(lx, ly) - cfg.fingertip_radius
        if gap > params.capture_dist:
            free.append((gap, f))
            continue
        if not attach(f):
            return None, "ik"

    palm_c = _palm_contact(cfg, shape, pose)
    if palm_c is not None:
        contacts.append(palm_c)

    def closure_ok():
        if not 2 <= len(contacts) <= 4:
            return False
        return grasp_analysis(
            [p for p, _ in contacts], [n for _, n in contacts], params.f_thresh
        )

    if not closure_ok():
        # recruit the nearest free finger and retry once
        recruited = False
        for gap, f in sorted(free):
            if gap <= 2.5 * params.capture_dist and len(contacts) < 4:
                if attach(f):
                    recruited = True
                    break
        if not recruited or not closure_ok():
            return None, "force" if 2 <= len(contacts) <= 4 else "contacts"

    ok, _ = check_collision_free(cfg, shape, pose, q)
    if not ok:
        return None, "collision"
    return Grasp(q=q, p=pose, contacts=contacts, parent=None), ""


def _finger_pts(cfg: SimConfig, f: int, angles):
    x, y, phi = cfg.finger_base_xs[f], 0.0, 0.0
    pts = [(x, y)]
    for L, a in zip(cfg.link_lengths, angles):
        phi += a
        x += L * math.cos(phi)
        y += L * math.sin(phi)
        pts.append((x, y))
    return pts, phi


def _finger_clear_of_object(cfg: SimConfig, shape, inv, f: int, angles, tol=1e-4):
    """Non-tip circles of one finger stay out of the object interior."""
    pts, _ = _finger_pts(cfg, f, angles)
    jpf = cfg.joints_per_finger
    checks = [((pts[0][0] + pts[1][0]) / 2.0, (pts[0][1] + pts[1][1]) / 2.0)]
    checks += [pts[k] for k in range(1, jpf)]
    for cx, cy in checks:
        lx, ly = inv(cx, cy)
        if shape.signed_distance(lx, ly) < cfg.link_radius - tol:
            return False
    return True


def _snap_to_palm(cfg: SimConfig, shape, pose, snap_dist: float):
    """Translate the object onto the palm when it floats or sinks within
    snap_dist of exact touching; otherwise return the pose unchanged."""
    (p0x, p0y), (p1x, p1y) = cfg.palm_segment
    ex, ey = p1x - p0x, p1y - p0y
    el2 = ex * ex + ey * ey
    if isinstance(shape, Disk):
        t = ((pose[0] - p0x) * ex + (pose[1] - p0y) * ey) / el2
        if not 0.0 <= t <= 1.0:
            return pose
        cx, cy = p0x + t * ex, p0y + t * ey
        d = math.hypot(pose[0] - cx, pose[1] - cy)
        gap = d - (shape.radius + cfg.palm_radius)
        if 0 < abs(gap) <= snap_dist and d > 1e-9:
            ux, uy = (pose[0] - cx) / d, (pose[1] - cy) / d
            return (pose[0] - ux * gap, pose[1] - uy * gap, pose[2])
        return pose
    # polygon: shift along +y so the lowest vertex above the palm touches it
    best_gap = None
    for vx, vy in shape.vertices:
        wx, wy = _pose_transform(pose, vx, vy)
        t = ((wx - p0x) * ex + (wy - p0y) * ey) / el2
        if not 0.0 <= t <= 1.0:
            continue
        gap = (wy - p0y) - cfg.palm_radius
        if best_gap is None or gap < best_gap:
            best_gap = gap
    if best_gap is not None and 0 < abs(best_gap) <= snap_dist:
        return (pose[0], pose[1] - best_gap, pose[2])
    return pose


def _palm_contact(cfg: SimConfig, shape, pose, tol: float = 5e-4):
    """Object-frame contact where the object rests on the palm, if it does."""
    (p0x, p0y), (p1x, p1y) = cfg.palm_segment
    ex, ey = p1x - p0x, p1y - p0y
    el2 = ex * ex + ey * ey
    inv = _world_to_obj_fn(pose)
    if isinstance(shape, Disk):
        t = ((pose[0] - p0x) * ex + (pose[1] - p0y) * ey) / el2
        t = min(1.0, max(0.0, t))
        cx, cy = p0x + t * ex, p0y + t * ey
        d = math.hypot(pose[0] - cx, pose[1] - cy)
        if abs(d - (shape.radius + cfg.palm_radius)) < tol:
            # boundary point toward the palm; inward normal is -radial
            dirx, diry = (cx - pose[0]) / d, (cy - pose[1]) / d
            lx, ly = inv(pose[0] + dirx * shape.radius, pose[1] + diry * shape.radius)
            r = math.hypot(lx, ly)
            return ((lx, ly), (-lx / r, -ly / r))
        return None
    best = None
    for vx, vy in shape.vertices:
        wx, wy = _pose_transform(pose, vx, vy)
        t = ((wx - p0x) * ex + (wy - p0y) * ey) / el2
        t = min(1.0, max(0.0, t))
        d = math.hypot(wx - (p0x + t * ex), wy - (p0y + t * ey))
        if abs(d - cfg.palm_radius) < tol and (best is None or d < best[0]):
            # push direction: palm pushes the object away from the palm axis
            ux, uy = (wx - (p0x + t * ex)) / d, (wy - (p0y + t * ey)) / d
            # inward normal in object frame = direction palm pushes, rotated back
            c, s = math.cos(pose[2]), math.sin(pose[2])
            nx, ny = c * ux + s * uy, -s * ux + c * uy
            best = (d, ((vx, vy), (nx, ny)))
    return best[1] if best else None


def rrt_expand(
    cfg: SimConfig,
    shape,
    cache: GraspCache,
    n_rrt: int,
    rng,
    params: GraspGenParams | None = None,
):
    """GraspRRTExpand: grow the cache by n_rrt sample/steer/repair rounds.

    The cache is extended in place; returns the statistics record.
    """
    params = params or GraspGenParams()
    stats = RrtStats()
    if len(cache) == 0:
        raise ValueError("rrt_expand needs a non-empty seed set")
    for _ in range(n_rrt):
        stats.iterations += 1
        sample = _random_grasp_sample(cfg, params, rng, cache)
        nn_idx, nn_dist = cache.nearest(sample)
        nearest = cache.grasps[nn_idx]
        if nn_dist < 1e-9:
            stats.rejected_duplicate += 1
            continue
        t = min(1.0, params.rrt_delta / nn_dist)
        repaired = None
        # a repair can push the node beyond delta; retry once at half step
        for frac in (t, t / 2.0):
            cand = _interpolate(nearest, sample, frac)
            repaired, why = fix_contact_and_collision(cfg, shape, cand, params)
            if repaired is None:
                break
            if grasp_distance(repaired, nearest, cache.metric_weights, cache.symmetry_order) <= params.rrt_delta + 1e-9:
                break
            repaired = None
            why = "step"
        if repaired is None:
            if why == "ik":
                stats.rejected_ik += 1
            elif why == "contacts":
                stats.rejected_contacts += 1
            elif why == "force":
                stats.rejected_force += 1
            elif why == "step":
                stats.rejected_step += 1
            else:
                stats.rejected_collision += 1
            continue
        if cache.min_distance(repaired) < params.duplicate_dist:
            stats.rejected_duplicate += 1
            continue
        repaired.parent = nn_idx
        cache.append(repaired)
        stats.added += 1
    return stats


def generate_grasps(
    object_id: str,
    shape,
    n_heuristic: int,
    n_rrt: int,
    seed: int,
    cfg: SimConfig | None = None,
    params: GraspGenParams | None = None,
):
    """Grasp Generation: heuristic seeding then RRT expansion.

    Returns (cache, stats). Deterministic for a given seed.
    """
    import numpy as np

    cfg = cfg or SimConfig(object_shape=shape)
    params = params or GraspGenParams()
    rng = np.random.Generator(np.random.PCG64(seed))
    cache = GraspCache(
        object_id=object_id,
        shape=shape,
        metric_weights=params.metric_weights,
        f_thresh=params.f_thresh,
        seed=seed,
        n_heuristic=n_heuristic,
        n_rrt=n_rrt,
    )
    heuristic_sample(cfg, shape, n_heuristic, rng, params, existing=cache)
    stats = rrt_expand(cfg, shape, cache, n_rrt, rng, params)
    return cache, stats
