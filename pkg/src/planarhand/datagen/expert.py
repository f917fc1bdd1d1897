"""Privileged scripted expert: replays grasp-tree paths.

The expert walks tree edges between cached grasps. Along an edge whose
contact structure is unchanged it interpolates squeezed joint targets at a
rate limit; when a finger's contact moves or appears it relocates that one
finger through a lifted waypoint (closed-loop against the current object
pose) while the other fingers keep holding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..graspgen.cache import Grasp, GraspCache, grasp_distance
from ..sim2d.config import SimConfig
from ..sim2d.kinematics import (
    finger_ik_candidates,
    hand_joint_points,
    nearest_ik,
    wrap_angle,
)


@dataclass
class ExpertParams:
    rate: float = 1.2              # max joint speed, rad/s ("fast" style)
    pose_speed: float = 0.035      # max commanded object translation, m/s
    theta_speed: float = 0.7       # max commanded object rotation, rad/s
    track_tol: float = 0.03        # pose tracking error that stalls progress
    squeeze_depth: float = 0.008   # m, targets pushed into the surface
    lift_height: float = 0.015     # m, relocation waypoint above the surface
    reloc_threshold: float = 0.02  # m, object-frame contact motion forcing relocation
    hold_ticks: int = 4            # settle ticks after a plan finishes
    servo_gain_pos: float = 0.9    # planned-pose correction against live error
    servo_gain_th: float = 0.9
    servo_cap_pos: float = 0.012   # m
    servo_cap_th: float = 0.3      # rad
    servo_smooth: float = 0.45     # EMA factor on the correction (anti-chatter)
    servo_int_rate: float = 0.03   # integral creep toward persistent error
    servo_int_cap: float = 0.015   # m, integrator clamp
    regrip_time: float = 0.8       # s of live-pose anchoring after a reflex regrip
    reloc_squeeze_boost: float = 1.0
    stall_stops: bool = True
    place_rate_scale: float = 0.35 # slower finger descent when re-placing
    place_depth_scale: float = 0.3 # touch first, full squeeze comes later


def servo_correction(plan_pose, live_pose, p: ExpertParams, symmetry_order: int = 1):
    """Capped correction leaning the plan anchor against the live error."""
    from ..sim2d.geometry import symmetric_angle_diff

    ex = plan_pose[0] - live_pose[0]
    ey = plan_pose[1] - live_pose[1]
    eth = symmetric_angle_diff(plan_pose[2] - live_pose[2], symmetry_order)
    cx = max(-p.servo_cap_pos, min(p.servo_cap_pos, p.servo_gain_pos * ex))
    cy = max(-p.servo_cap_pos, min(p.servo_cap_pos, p.servo_gain_pos * ey))
    cth = max(-p.servo_cap_th, min(p.servo_cap_th, p.servo_gain_th * eth))
    return (cx, cy, cth)


def servo_pose(plan_pose, live_pose, p: ExpertParams, symmetry_order: int = 1):
    cx, cy, cth = servo_correction(plan_pose, live_pose, p, symmetry_order)
    return (plan_pose[0] + cx, plan_pose[1] + cy, plan_pose[2] + cth)


SLOW_RATE = 0.4


def edge_needs_relocation(cfg, shape, cache, i: int, j: int, threshold: float) -> bool:
    """True when traversing grasp i -> j forces a finger to re-place."""
    cm_a = finger_contact_map(cfg, shape, cache.grasps[i])
    cm_b = finger_contact_map(cfg, shape, cache.grasps[j])
    for ca, cb in zip(cm_a, cm_b):
        if cb is None:
            continue
        if ca is None:
            return True
        if math.hypot(ca[0][0] - cb[0][0], ca[0][1] - cb[0][1]) > threshold:
            return True
    return False


def path_relocations(cfg, shape, cache, path, threshold: float = 0.02) -> int:
    return sum(
        edge_needs_relocation(cfg, shape, cache, a, b, threshold)
        for a, b in zip(path, path[1:])
    )


def tree_path(cache: GraspCache, a: int, b: int):
    """Grasp-index path a -> b through parent edges; None if disconnected."""

    def chain(i):
        seq = [i]
        while cache.grasps[seq[-1]].parent is not None:
            seq.append(cache.grasps[seq[-1]].parent)
        return seq

    ca = chain(a)
    cb = chain(b)
    if ca[-1] != cb[-1]:
        return None
    in_a = {n: k for k, n in enumerate(ca)}
    lca_pos_b = next(k for k, n in enumerate(cb) if n in in_a)
    lca = cb[lca_pos_b]
    up = ca[: in_a[lca] + 1]
    down = cb[:lca_pos_b][::-1]
    return up + down


def finger_contact_map(cfg: SimConfig, shape, grasp: Grasp, tol: float = 2e-3):
    """Per-finger object-frame contact (point, inward normal) or None.

    Derived by matching the stored contacts to fingertip positions.
    """
    chains = hand_joint_points(cfg, grasp.q)
    tips = [chains[f][-1] for f in range(cfg.n_fingers)]
    x, y, th = grasp.p
    c, s = math.cos(th), math.sin(th)
    out = [None] * cfg.n_fingers
    for (px, py), (nx, ny) in grasp.contacts:
        wx = x + c * px - s * py
        wy = y + s * px + c * py
        wnx, wny = c * nx - s * ny, s * nx + c * ny
        # fingertip center sits one radius off the surface against the push
        ex = wx - wnx * cfg.fingertip_radius
        ey = wy - wny * cfg.fingertip_radius
        best, best_d = None, tol + cfg.fingertip_radius
        for f, (tx_, ty_) in enumerate(tips):
            d = math.hypot(tx_ - ex, ty_ - ey)
            if d < best_d:
                best, best_d = f, d
        if best is not None and out[best] is None:
            out[best] = ((px, py), (nx, ny))
    return out


def squeezed_targets(cfg: SimConfig, grasp: Grasp, contact_map, depth: float, lo, hi, object_pose=None):
    """Joint targets driving contacting tips `depth` into the surface.

    Contact points are taken in the object frame and re-anchored to
    object_pose (the planned pose by default), so callers can squeeze
    against the live pose instead.
    """
    pose = object_pose if object_pose is not None else grasp.p
    x, y, th = pose
    c, s = math.cos(th), math.sin(th)
    q = list(grasp.q)
    jpf = cfg.joints_per_finger
    for f, item in enumerate(contact_map):
        if item is None:
            continue
        (px, py), (nx, ny) = item
        wx = x + c * px - s * py
        wy = y + s * px + c * py
        wnx, wny = c * nx - s * ny, s * nx + c * ny
        tx = wx - wnx * (cfg.fingertip_radius - depth)
        ty = wy - wny * (cfg.fingertip_radius - depth)
        push = math.atan2(wny, wnx)
        cands = finger_ik_candidates(cfg, f, tx, ty, push, lo, hi)
        sol = nearest_ik(cands, grasp.q[f * jpf : (f + 1) * jpf])
        if sol is not None:
            q[f * jpf : (f + 1) * jpf] = sol
    return q


class PathExpert:
    """Stateful edge follower; call action(world) once per control tick."""

    def __init__(self, cfg: SimConfig, cache: GraspCache, params: ExpertParams | None = None):
        self.cfg = cfg
        self.cache = cache
        self.shape = cache.shape
        self.params = params or ExpertParams()
        self.lo, self.hi = cfg.joint_limits()
        self.plan = None
        self.edge = 0
        self.frac = 1.0
        self.phase = "hold"
        self.reloc_queue = []
        self.reloc_finger = None
        self.q_from = None
        self.q_to = None
        self.hold_target = None
        self._servo_ema = (0.0, 0.0, 0.0)
        self._servo_int = (0.0, 0.0)
        self.regrip_until = -1.0
        self._last_emit = None

    # -- planning ---------------------------------------------------------

    def set_plan(self, path):
        """path: list of cache indices (len >= 1)."""
        self.plan = list(path)
        self.edge = 0
        self.hold_target = None
        self._servo_ema = (0.0, 0.0, 0.0)
        self._servo_int = (0.0, 0.0)
        self._begin_edge()

    def plan_to(self, start_idx: int, goal_idx: int) -> bool:
        path = tree_path(self.cache, start_idx, goal_idx)
        if path is None:
            return False
        self.set_plan(path)
        return True

    @property
    def done(self) -> bool:
        return self.plan is None or (
            self.edge >= len(self.plan) - 1 and self.phase == "hold"
        )

    def _grasp(self, i) -> Grasp:
        return self.cache.grasps[self.plan[i]]

    def _begin_edge(self):
        p = self.params
        if self.edge >= len(self.plan) - 1:
            g = self._grasp(len(self.plan) - 1)
            cm = finger_contact_map(self.cfg, self.shape, g)
            self.hold_grasp = g
            self.hold_contacts = cm
            self.phase = "hold"
            return
        a = self._grasp(self.edge)
        b = self._grasp(self.edge + 1)
        cm_a = finger_contact_map(self.cfg, self.shape, a)
        cm_b = finger_contact_map(self.cfg, self.shape, b)
        self.reloc_queue = []
        for f in range(self.cfg.n_fingers):
            ca, cb = cm_a[f], cm_b[f]
            if cb is None:
                continue
            if ca is None:
                self.reloc_queue.append(f)
            else:
                d = math.hypot(ca[0][0] - cb[0][0], ca[0][1] - cb[0][1])
                if d > p.reloc_threshold:
                    self.reloc_queue.append(f)
        self.cm_a, self.cm_b = cm_a, cm_b
        self.frac = 0.0
        if self.reloc_queue:
            self.reloc_finger = self.reloc_queue.pop(0)
            self.phase = "reloc_lift"
        else:
            self.phase = "move"

    # -- per-tick action ---------------------------------------------------

    def action(self, world) -> list:
        q = self._raw_action(world)
        # per-joint output rate limit: emitted targets never jump faster
        # than the configured joint speed, servo corrections included
        lim = self.params.rate * self.cfg.control_dt
        if self._last_emit is not None:
            q = [
                max(prev - lim, min(prev + lim, v))
                for prev, v in zip(self._last_emit, q)
            ]
        self._last_emit = list(q)
        return q

    def _raw_action(self, world) -> list:
        p = self.params
        cfg = self.cfg
        jpf = cfg.joints_per_finger
        dt = cfg.control_dt

        if self.plan is None:
            return list(world.q_target)

        if self.phase == "hold":
            # squeeze around the servoed plan pose: anchors stay near the
            # plan (never chase the object) but lean against its drift
            anchor = self._smoothed_anchor(self.hold_grasp.p, world)
            return squeezed_targets(
                cfg, self.hold_grasp, self.hold_contacts, p.squeeze_depth,
                self.lo, self.hi, object_pose=anchor,
            )

        a = self._grasp(self.edge)
        b = self._grasp(self.edge + 1)

        if self.phase == "move":
            qa = squeezed_targets(cfg, a, self.cm_a, p.squeeze_depth, self.lo, self.hi)
            qb = squeezed_targets(cfg, b, self.cm_b, p.squeeze_depth, self.lo, self.hi)
            # pace by the slowest of joint, translation, and rotation speed,
            # and stall while the object lags the interpolated pose
            span_q = max(abs(x - y) for x, y in zip(qa, qb))
            dpos = math.hypot(b.p[0] - a.p[0], b.p[1] - a.p[1])
            dth = abs(wrap_angle(b.p[2] - a.p[2]))
            t_edge = max(span_q / p.rate, dpos / p.pose_speed, dth / p.theta_speed, dt)
            step = min(1.0, dt / t_edge)
            here = (
                a.p[0] + self.frac * (b.p[0] - a.p[0]),
                a.p[1] + self.frac * (b.p[1] - a.p[1]),
                a.p[2] + self.frac * wrap_angle(b.p[2] - a.p[2]),
            )
            from ..sim2d.geometry import symmetric_angle_diff as _sym
            lag = (
                math.hypot(world.obj_x - here[0], world.obj_y - here[1])
                + 0.5 * abs(_sym(world.obj_th - here[2], self.cache.symmetry_order))
            )
            if lag > 3.0 * p.track_tol and p.stall_stops:
                step = -0.6 * step  # retreat and let the servo recover
            elif lag > 2.0 * p.track_tol and p.stall_stops:
                step = 0.0
            elif lag > p.track_tol:
                step *= 0.2
            self.frac = min(1.0, max(0.0, self.frac + step))
            # follow the interpolated plan pose with the servo, pushing the
            # object along the edge; q-space lerp is the IK fallback
            t_pose = (
                a.p[0] + self.frac * (b.p[0] - a.p[0]),
                a.p[1] + self.frac * (b.p[1] - a.p[1]),
                wrap_angle(a.p[2] + self.frac * wrap_angle(b.p[2] - a.p[2])),
            )
            anchor = self._smoothed_anchor(t_pose, world)
            cm = [cb if cb is not None else ca for ca, cb in zip(self.cm_a, self.cm_b)]
            lerp_q = [x + self.frac * (y - x) for x, y in zip(qa, qb)]
            ref = Grasp(q=lerp_q, p=t_pose, contacts=[])
            q = squeezed_targets(
                cfg, ref, cm, p.squeeze_depth, self.lo, self.hi, object_pose=anchor
            )
            if self.frac >= 1.0:
                self.edge += 1
                self._begin_edge()
            return q

        # relocation phases: one finger moves through a lifted waypoint;
        # the holding fingers squeeze harder to carry the load
        f = self.reloc_finger
        hold_q = squeezed_targets(cfg, a, self.cm_a, p.reloc_squeeze_boost * p.squeeze_depth, self.lo, self.hi)
        target = self._reloc_target(world, b, f, lifted=self.phase == "reloc_lift")
        if target is None:
            # unreachable waypoint: skip this relocation, fall through to move
            self._advance_reloc()
            return hold_q
        cur = list(world.q[f * jpf : (f + 1) * jpf])
        span = max(abs(x - y) for x, y in zip(cur, target))
        if span < 0.08:
            self._advance_reloc()
        rate = p.rate * (p.place_rate_scale if self.phase == "reloc_place" else 1.0)
        q = list(hold_q)
        for i in range(jpf):
            lo_i = cur[i] - rate * dt
            hi_i = cur[i] + rate * dt
            q[f * jpf + i] = max(lo_i, min(hi_i, target[i]))
        return q

    def _smoothed_anchor(self, plan_pose, world):
        """Servo anchor: EMA-filtered proportional correction (the raw
        per-tick correction chatters against light objects), a slow
        integrator that removes steady-state sag, and a feed-forward lean
        against the (privileged) random disturbance force."""
        p = self.params
        c = servo_correction(plan_pose, world.object_pose, p, self.cache.symmetry_order)
        ax = world.rf_x / world.object_mass
        ay = world.rf_y / world.object_mass
        lean = 0.002  # m of anchor shift per m/s^2 of disturbance
        cap = 0.008
        cx = c[0] - max(-cap, min(cap, lean * ax))
        cy = c[1] - max(-cap, min(cap, lean * ay))
        s = p.servo_smooth
        ema = tuple(s * o + (1.0 - s) * n for o, n in zip(self._servo_ema, (cx, cy, c[2])))
        self._servo_ema = ema
        return (
            plan_pose[0] + ema[0],
            plan_pose[1] + ema[1],
            plan_pose[2] + ema[2],
        )

    def _advance_reloc(self):
        if self.phase == "reloc_lift":
            self.phase = "reloc_place"
        else:
            if self.reloc_queue:
                self.reloc_finger = self.reloc_queue.pop(0)
                self.phase = "reloc_lift"
            else:
                self.phase = "move"
                self.frac = 0.0

    def _reloc_target(self, world, b: Grasp, f: int, lifted: bool):
        """IK for finger f at grasp b's contact, re-anchored to the live pose."""
        cfg = self.cfg
        p = self.params
        item = self.cm_b[f]
        if item is None:
            return None
        (px, py), (nx, ny) = item
        x, y, th = world.object_pose
        c, s = math.cos(th), math.sin(th)
        wx = x + c * px - s * py
        wy = y + s * px + c * py
        wnx, wny = c * nx - s * ny, s * nx + c * ny
        if lifted:
            off = cfg.fingertip_radius + p.lift_height
        else:
            off = cfg.fingertip_radius - p.place_depth_scale * p.squeeze_depth
        tx = wx - wnx * off
        ty = wy - wny * off
        push = math.atan2(wny, wnx)
        jpf = cfg.joints_per_finger
        cands = finger_ik_candidates(cfg, f, tx, ty, push, self.lo, self.hi)
        return nearest_ik(cands, world.q[f * jpf : (f + 1) * jpf])
