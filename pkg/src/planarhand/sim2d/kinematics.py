"""Forward and inverse kinematics for the planar finger chains.

Joint convention: the first joint angle of a finger is absolute (measured
from the +x axis of the hand frame), subsequent joints are relative. Link k
extends from joint k at the cumulative angle sum(theta[:k+1]).
"""

from __future__ import annotations

import math

from .config import SimConfig

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def finger_fk(base_x: float, base_y: float, link_lengths, angles):
    """Joint positions [base, j1, ..., tip] and cumulative link angles."""
    pts = [(base_x, base_y)]
    cum = []
    x, y, phi = base_x, base_y, 0.0
    for L, th in zip(link_lengths, angles):
        phi += th
        x += L * math.cos(phi)
        y += L * math.sin(phi)
        pts.append((x, y))
        cum.append(phi)
    return pts, cum


def hand_joint_points(cfg: SimConfig, q):
    """Per-finger joint-position chains for the full hand."""
    jpf = cfg.joints_per_finger
    chains = []
    for f in range(cfg.n_fingers):
        angles = q[f * jpf : (f + 1) * jpf]
        pts, _ = finger_fk(cfg.finger_base_xs[f], 0.0, cfg.link_lengths, angles)
        chains.append(pts)
    return chains


def hand_keypoints(cfg: SimConfig, q):
    """PIP and fingertip positions per finger, flattened to a list of (x, y).

    K = 2 * n_fingers; ordering is [f0_pip, f0_tip, f1_pip, f1_tip, ...].
    """
    kps = []
    for pts in hand_joint_points(cfg, q):
        kps.append(pts[1])
        kps.append(pts[-1])
    return kps


def keypoint_count(cfg: SimConfig) -> int:
    return 2 * cfg.n_fingers


def two_link_ik(l1: float, l2: float, tx: float, ty: float):
    """Both (theta1, theta2) solutions reaching (tx, ty) from the origin.

    Returns an empty list when the target is out of reach.
    """
    d2 = tx * tx + ty * ty
    c2 = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if c2 > 1.0:
        if c2 > 1.0 + 1e-9:
            return []
        c2 = 1.0
    if c2 < -1.0:
        if c2 < -1.0 - 1e-9:
            return []
        c2 = -1.0
    th2 = math.acos(c2)
    base = math.atan2(ty, tx)
    sols = []
    for s in (th2, -th2):
        th1 = base - math.atan2(l2 * math.sin(s), l1 + l2 * math.cos(s))
        sols.append((wrap_angle(th1), wrap_angle(s)))
    return sols


def finger_ik(
    cfg: SimConfig,
    finger: int,
    target_x: float,
    target_y: float,
    approach_angle: float,
    limits_lo,
    limits_hi,
):
    """Joint angles placing the fingertip center at the target with the last
    link pointing along approach_angle. None when no in-limit solution exists.

    Only supports the 3-joint finger (2-joint falls back to plain 2-link IK).
    """
    jpf = cfg.joints_per_finger
    base_x = cfg.finger_base_xs[finger]
    lo = limits_lo[finger * jpf : (finger + 1) * jpf]
    hi = limits_hi[finger * jpf : (finger + 1) * jpf]
    L = cfg.link_lengths
    if jpf == 2:
        for th1, th2 in two_link_ik(L[0], L[1], target_x - base_x, target_y):
            if lo[0] <= th1 <= hi[0] and lo[1] <= th2 <= hi[1]:
                return [th1, th2]
        return None
    if jpf != 3:
        raise ValueError("finger_ik supports 2 or 3 joints per finger")
    wx = target_x - L[2] * math.cos(approach_angle)
    wy = target_y - L[2] * math.sin(approach_angle)
    for th1, th2 in two_link_ik(L[0], L[1], wx - base_x, wy):
        th3 = wrap_angle(approach_angle - th1 - th2)
        if (
            lo[0] <= th1 <= hi[0]
            and lo[1] <= th2 <= hi[1]
            and lo[2] <= th3 <= hi[2]
        ):
            return [th1, th2, th3]
    return None


# approach-angle offsets tried around the nominal push direction, in order
IK_APPROACH_OFFSETS = (0.0, 0.35, -0.35, 0.7, -0.7, 1.05, -1.05, 1.4, -1.4)


def finger_ik_search(
    cfg: SimConfig,
    finger: int,
    target_x: float,
    target_y: float,
    preferred_angle: float,
    limits_lo,
    limits_hi,
):
    """finger_ik over a fan of approach angles; first hit wins."""
    for off in IK_APPROACH_OFFSETS:
        q = finger_ik(
            cfg, finger, target_x, target_y, preferred_angle + off, limits_lo, limits_hi
        )
        if q is not None:
            return q
    return None


def finger_ik_candidates(
    cfg: SimConfig,
    finger: int,
    target_x: float,
    target_y: float,
    preferred_angle: float,
    limits_lo,
    limits_hi,
):
    """All in-limit IK solutions over the approach fan (both elbows)."""
    jpf = cfg.joints_per_finger
    base_x = cfg.finger_base_xs[finger]
    lo = limits_lo[finger * jpf : (finger + 1) * jpf]
    hi = limits_hi[finger * jpf : (finger + 1) * jpf]
    L = cfg.link_lengths
    out = []
    if jpf != 3:
        q = finger_ik(cfg, finger, target_x, target_y, preferred_angle, limits_lo, limits_hi)
        return [q] if q is not None else []
    for off in IK_APPROACH_OFFSETS:
        phi = preferred_angle + off
        wx = target_x - L[2] * math.cos(phi)
        wy = target_y - L[2] * math.sin(phi)
        for th1, th2 in two_link_ik(L[0], L[1], wx - base_x, wy):
            th3 = wrap_angle(phi - th1 - th2)
            if lo[0] <= th1 <= hi[0] and lo[1] <= th2 <= hi[1] and lo[2] <= th3 <= hi[2]:
                out.append([th1, th2, th3])
    return out


def nearest_ik(candidates, current_q):
    """Candidate minimizing joint-space distance to the current angles."""
    best, best_d = None, float("inf")
    for cand in candidates:
        d = sum((a - b) ** 2 for a, b in zip(cand, current_q))
        if d < best_d:
            best, best_d = cand, d
    return best
