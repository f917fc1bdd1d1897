"""Deterministic planar hand/object world.

One free rigid object (disk or convex polygon), n PD-driven 3-link fingers
rooted on a fixed palm, gravity on the object, Coulomb friction point
contacts. Velocity-level sequential impulses with warm starting resolve
contacts; penetration is removed by a separate position pass (split
impulse) so stabilization never injects kinetic energy. Finger joints use
an implicit damping step, which keeps the distal joints stable at the
120 Hz substep rate.

The hand is treated as gravity-compensated: link weight does not load the
joints. All randomness flows through the world's own seeded generator, so
identical seeds and command streams give bit-identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig, DomainRandomization, ConfigError
from .geometry import Disk, ConvexPolygon
from .kinematics import wrap_angle, hand_keypoints


class SimulationDiverged(RuntimeError):
    """NaN or non-finite state; the episode is unrecoverable."""


@dataclass
class Observation:
    """Noisy proprioception for one control tick."""

    time: float
    keypoints: list          # K x (x, y), FK of the noisy joint reading
    q: list                  # noisy joint positions
    q_target: list           # last commanded targets (exact)
    ctrl_error: list         # q_target - noisy q
    contact_count: int
    dropped: bool


@dataclass
class Contact:
    """One resolved contact point, reported in world coordinates."""

    finger: int              # finger index, -1 for palm
    keypoint: int            # circle index within the finger chain, -1 for palm
    point: tuple
    normal: tuple            # unit, from the object surface toward the hand
    normal_force: float      # impulse / dt, N


def _inv3(m):
    """Closed-form inverse of a symmetric 3x3 given as nested lists."""
    a, b, c = m[0]
    _, d, e = m[1]
    f = m[2][2]
    A = d * f - e * e
    B = -(b * f - c * e)
    C = b * e - c * d
    det = a * A + b * B + c * C
    if abs(det) < 1e-18:
        raise SimulationDiverged("singular finger mass matrix")
    inv_det = 1.0 / det
    D = a * f - c * c
    E = -(a * e - b * c)
    F = a * d - b * b
    return (
        (A * inv_det, B * inv_det, C * inv_det),
        (B * inv_det, D * inv_det, E * inv_det),
        (C * inv_det, E * inv_det, F * inv_det),
    )


def _mat3_vec(m, v):
    return (
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    )


DEFAULT_REST_POSE_3F = (2.2, 0.5, 0.3, 0.25, -0.05, -0.05, 0.94, -0.5, -0.3)

# joint armature (reflected rotor inertia), stabilizes the distal joints
ARMATURE = 5e-5

_SNAPSHOT_VERSION = 1


def pd_torque(q_target, q, q_dot, gains, torque_limit=None):
    """tau = Kp (q_target - q) - Kd q_dot, clamped to the torque limit."""
    if not (len(q_target) == len(q) == len(q_dot)):
        raise ValueError("pd_torque: array length mismatch")
    kp, kd = gains
    out = []
    for qt, qi, qd in zip(q_target, q, q_dot):
        tau = kp * (qt - qi) - kd * qd
        if torque_limit is not None:
            tau = max(-torque_limit, min(torque_limit, tau))
        out.append(tau)
    return out


class World:
    """Mutable world state; exactly one actor steps it."""

    def __init__(self, cfg: SimConfig, dr: DomainRandomization, seed: int):
        cfg.validate()
        self.cfg = cfg
        self.dr = dr
        self.seed = int(seed)
        self.rng = np.random.Generator(np.random.PCG64(self.seed))

        u = self.rng.uniform
        self.object_mass = float(u(*dr.object_mass_range))
        self.mu_obj = float(u(*dr.object_friction_range))
        scale = float(u(*dr.shape_scale_range))
        self.shape = cfg.object_shape.scaled(scale)
        self.mu_hand = float(u(*dr.hand_friction_range))
        self.kp = cfg.kp * float(u(*dr.p_gain_mult_range))
        self.kd = cfg.kd * float(u(*dr.d_gain_mult_range))
        self.obs_offset = [
            float(x) for x in self.rng.normal(0.0, dr.joint_obs_episode_noise, cfg.dof)
        ]
        g_angle = float(u(*dr.gravity_angle_range))
        gx, gy = cfg.gravity
        ca, sa = math.cos(g_angle), math.sin(g_angle)
        self.gravity = (ca * gx - sa * gy, sa * gx + ca * gy)
        self.rf_scale = float(self.rng.choice(dr.random_force_scales))
        init_noise = [
            float(x)
            for x in self.rng.uniform(*dr.init_joint_noise_range, cfg.dof)
        ]

        self.object_inertia = self.object_mass * self.shape.unit_inertia()
        self.inv_mass = 1.0 / self.object_mass
        self.inv_inertia = 1.0 / self.object_inertia

        lo, hi = cfg.joint_limits()
        self.limits_lo = lo
        self.limits_hi = hi
        if cfg.dof == len(DEFAULT_REST_POSE_3F) and cfg.n_fingers == 3:
            rest = list(DEFAULT_REST_POSE_3F)
        else:
            rest = [(a + b) / 2.0 for a, b in zip(lo, hi)]
        self.q = [
            max(lo[i], min(hi[i], rest[i] + init_noise[i])) for i in range(cfg.dof)
        ]
        self.q_dot = [0.0] * cfg.dof
        self.q_target = list(self.q)

        ox, oy, oth = cfg.object_init_pose
        self.obj_x, self.obj_y, self.obj_th = float(ox), float(oy), float(oth)
        self.obj_vx = self.obj_vy = self.obj_w = 0.0

        self.rf_x = self.rf_y = 0.0
        self.time = 0.0
        self.tick = 0
        self._tau_accum = [0.0] * cfg.dof
        self.last_torque = [0.0] * cfg.dof
        self.contacts: list[Contact] = []
        self._warm: dict = {}
        self._warm_spin: dict = {}
        self.last_contact_time = 0.0
        self.contact_loss_pos = (self.obj_x, self.obj_y)
        self.dropped_flag = False

    # -- helpers ---------------------------------------------------------

    @property
    def object_pose(self):
        return (self.obj_x, self.obj_y, self.obj_th)

    @property
    def object_vel(self):
        return (self.obj_vx, self.obj_vy, self.obj_w)

    def clone(self) -> "World":
        import copy

        other = object.__new__(World)
        other.__dict__ = copy.deepcopy(self.__dict__)
        return other

    def keypoints(self):
        """True (noise-free) keypoint positions."""
        return hand_keypoints(self.cfg, self.q)

    def tip_speeds(self):
        """Per-finger fingertip speed magnitudes, m/s."""
        cfg = self.cfg
        jpf = cfg.joints_per_finger
        chains = self._chains(self.q)
        out = []
        for f in range(cfg.n_fingers):
            pts = chains[f]
            tx, ty = pts[-1]
            vx = vy = 0.0
            for j in range(jpf):
                ox, oy = pts[j]
                qd = self.q_dot[f * jpf + j]
                vx += -qd * (ty - oy)
                vy += qd * (tx - ox)
            out.append(math.hypot(vx, vy))
        return out

    def _chains(self, q):
        cfg = self.cfg
        jpf = cfg.joints_per_finger
        chains = []
        for f in range(cfg.n_fingers):
            x, y = cfg.finger_base_xs[f], 0.0
            pts = [(x, y)]
            phi = 0.0
            for k in range(jpf):
                phi += q[f * jpf + k]
                x += cfg.link_lengths[k] * math.cos(phi)
                y += cfg.link_lengths[k] * math.sin(phi)
                pts.append((x, y))
            chains.append(pts)
        return chains

    def _finger_masses(self, chains):
        """Per-finger joint-space inertia and its inverse (composite rods)."""
        cfg = self.cfg
        jpf = cfg.joints_per_finger
        m_link = cfg.link_mass
        mats, invs = [], []
        for f in range(cfg.n_fingers):
            pts = chains[f]
            coms = []
            rot_inertia = []
            for k in range(jpf):
                x0, y0 = pts[k]
                x1, y1 = pts[k + 1]
                coms.append(((x0 + x1) / 2.0, (y0 + y1) / 2.0))
                rot_inertia.append(m_link * cfg.link_lengths[k] ** 2 / 12.0)
            M = [[0.0] * jpf for _ in range(jpf)]
            for i in range(jpf):
                oi = pts[i]
                for j in range(i, jpf):
                    oj = pts[j]
                    s = 0.0
                    for k in range(max(i, j), jpf):
                        cx, cy = coms[k]
                        s += (
                            m_link
                            * ((cx - oi[0]) * (cx - oj[0]) + (cy - oi[1]) * (cy - oj[1]))
                            + rot_inertia[k]
                        )
                    M[i][j] = s
                    M[j][i] = s
                M[i][i] += ARMATURE
            mats.append(M)
            invs.append(_inv3(M) if jpf == 3 else _inv_generic(M))
        return mats, invs

    def _finger_mass_inv(self, chains):
        return self._finger_masses(chains)[1]

    def _bias_torques(self, chains):
        """Coriolis/centrifugal joint torques b(q, q_dot), per finger.

        Planar RNEA with q_ddot = 0 and no gravity on the links: joint
        accelerations are purely centripetal, link angular accelerations
        vanish, so the bias reduces to moments of m_k * a_com,k.
        """
        cfg = self.cfg
        jpf = cfg.joints_per_finger
        m_link = cfg.link_mass
        out = []
        for f in range(cfg.n_fingers):
            pts = chains[f]
            qd = self.q_dot[f * jpf : (f + 1) * jpf]
            # forward pass: joint-origin accelerations (centripetal only)
            acc = [(0.0, 0.0)]
            omega = 0.0
            for k in range(jpf):
                omega += qd[k]
                rx = pts[k + 1][0] - pts[k][0]
                ry = pts[k + 1][1] - pts[k][1]
                ax = acc[k][0] - omega * omega * rx
                ay = acc[k][1] - omega * omega * ry
                acc.append((ax, ay))
            # com accelerations
            com_acc = []
            coms = []
            omega = 0.0
            for k in range(jpf):
                omega += qd[k]
                rx = (pts[k + 1][0] - pts[k][0]) / 2.0
                ry = (pts[k + 1][1] - pts[k][1]) / 2.0
                com_acc.append(
                    (acc[k][0] - omega * omega * rx, acc[k][1] - omega * omega * ry)
                )
                coms.append((pts[k][0] + rx, pts[k][1] + ry))
            # backward pass: moment of inertial forces about each joint
            b = [0.0] * jpf
            for j in range(jpf):
                oj = pts[j]
                s = 0.0
                for k in range(j, jpf):
                    fx = m_link * com_acc[k][0]
                    fy = m_link * com_acc[k][1]
                    s += (coms[k][0] - oj[0]) * fy - (coms[k][1] - oj[1]) * fx
                b[j] = s
            out.append(b)
        return out

    def kinetic_energy(self) -> float:
        chains = self._chains(self.q)
        cfg = self.cfg
        jpf = cfg.joints_per_finger
        ke = 0.5 * self.object_mass * (self.obj_vx**2 + self.obj_vy**2)
        ke += 0.5 * self.object_inertia * self.obj_w**2
        for f in range(cfg.n_fingers):
            pts = chains[f]
            phi_dot = 0.0
            vx = vy = 0.0
            for k in range(jpf):
                qd = self.q_dot[f * jpf + k]
                phi_dot += qd
                x0, y0 = pts[k]
                x1, y1 = pts[k + 1]
                cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
                # com velocity: sum over joints <= k of qd_j * perp(c - o_j)
                vcx = vcy = 0.0
                pd = 0.0
                for j in range(k + 1):
                    oj = pts[j]
                    qdj = self.q_dot[f * jpf + j]
                    vcx += -qdj * (cy - oj[1])
                    vcy += qdj * (cx - oj[0])
                    pd += qdj
                m = cfg.link_mass
                ke += 0.5 * m * (vcx**2 + vcy**2)
                ke += 0.5 * (m * cfg.link_lengths[k] ** 2 / 12.0) * pd**2
        return ke

    # -- contact machinery -----------------------------------------------

    def _world_to_obj(self, x, y):
        c, s = math.cos(self.obj_th), math.sin(self.obj_th)
        dx, dy = x - self.obj_x, y - self.obj_y
        return c * dx + s * dy, -s * dx + c * dy

    def _obj_to_world(self, x, y):
        c, s = math.cos(self.obj_th), math.sin(self.obj_th)
        return self.obj_x + c * x - s * y, self.obj_y + s * x + c * y

    def _obj_dir_to_world(self, x, y):
        c, s = math.cos(self.obj_th), math.sin(self.obj_th)
        return c * x - s * y, s * x + c * y

    def _hand_circles(self, chains):
        """(finger, circle_index, x, y, radius, chain_joint_count) tuples."""
        cfg = self.cfg
        out = []
        jpf = cfg.joints_per_finger
        for f in range(cfg.n_fingers):
            pts = chains[f]
            for k in range(1, jpf + 1):
                r = cfg.fingertip_radius if k == jpf else cfg.link_radius
                out.append((f, k, pts[k][0], pts[k][1], r, k))
            # extra mid-link circle on the proximal link fills the gap
            x0, y0 = pts[0]
            x1, y1 = pts[1]
            out.append((f, 0, (x0 + x1) / 2.0, (y0 + y1) / 2.0, cfg.link_radius, 1))
        return out

    def _detect_contacts(self, chains, margin=2.5e-4):
        """Candidate contacts at the current configuration.

        Each entry: (kind, key, finger_a, joints_a, pa, finger_b, joints_b,
        pb, n, pen) where n points from B (object/palm/other finger) toward A.
        """
        cfg = self.cfg
        shape = self.shape
        found = []
        circles = self._hand_circles(chains)

        # finger circles vs object
        for (f, k, x, y, r, njoints) in circles:
            lx, ly = self._world_to_obj(x, y)
            sd = shape.signed_distance(lx, ly)
            pen = r - sd
            if pen > -margin:
                (bx, by), (nx, ny) = shape.closest_boundary_point(lx, ly)
                wnx, wny = self._obj_dir_to_world(nx, ny)
                wbx, wby = self._obj_to_world(bx, by)
                found.append(
                    ("fo", (0, f, k), f, njoints, (wbx, wby), -1, 0, (wbx, wby), (wnx, wny), pen)
                )

        # palm vs object
        (p0x, p0y), (p1x, p1y) = cfg.palm_segment
        if isinstance(shape, Disk):
            ex, ey = p1x - p0x, p1y - p0y
            el2 = ex * ex + ey * ey
            t = ((self.obj_x - p0x) * ex + (self.obj_y - p0y) * ey) / el2
            t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
            cx, cy = p0x + t * ex, p0y + t * ey
            dx, dy = cx - self.obj_x, cy - self.obj_y
            d = math.hypot(dx, dy)
            pen = (shape.radius + cfg.palm_radius) - d
            if pen > -margin and d > 1e-12:
                n = (dx / d, dy / d)  # from object center toward palm
                surf = (
                    self.obj_x + n[0] * shape.radius,
                    self.obj_y + n[1] * shape.radius,
                )
                found.append(("po", (1, 0, 0), -1, 0, surf, -1, 0, surf, n, pen))
        else:
            ex, ey = p1x - p0x, p1y - p0y
            el2 = ex * ex + ey * ey
            for vid, (vx_, vy_) in enumerate(shape.vertices):
                wx, wy = self._obj_to_world(vx_, vy_)
                t = ((wx - p0x) * ex + (wy - p0y) * ey) / el2
                t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
                cx, cy = p0x + t * ex, p0y + t * ey
                dx, dy = cx - wx, cy - wy
                d = math.hypot(dx, dy)
                pen = cfg.palm_radius - d
                if pen > -margin and d > 1e-12:
                    n = (dx / d, dy / d)
                    found.append(
                        ("po", (1, vid, 0), -1, 0, (wx, wy), -1, 0, (wx, wy), n, pen)
                    )

        # finger vs finger (cross-finger only)
        nc = len(circles)
        for i in range(nc):
            fa, ka, xa, ya, ra, na = circles[i]
            for j in range(i + 1, nc):
                fb, kb, xb, yb, rb, nb = circles[j]
                if fa == fb:
                    continue
                dx, dy = xa - xb, ya - yb
                d2 = dx * dx + dy * dy
                rsum = ra + rb
                if d2 < (rsum + margin) ** 2:
                    d = math.sqrt(d2)
                    if d < 1e-12:
                        continue
                    n = (dx / d, dy / d)
                    mid = ((xa + xb) / 2.0, (ya + yb) / 2.0)
                    found.append(
                        ("ff", (2, fa * 16 + ka, fb * 16 + kb), fa, na, mid, fb, nb, mid, n, rsum - d)
                    )
        return found

    def _contact_setup(self, entries, chains, minvs):
        """Precompute jacobian/mass terms for the solver from raw entries."""
        cfg = self.cfg
        jpf = cfg.joints_per_finger
        rows = []
        for (kind, key, fa, nja, pa, fb, njb, pb, n, pen) in entries:
            nx, ny = n
            tx, ty = -ny, nx
            cx, cy = pa

            def hand_terms(f, njoints, direction):
                dx, dy = direction
                base = f * jpf
                pts = chains[f]
                u = [0.0] * jpf
                for j in range(njoints):
                    ox, oy = pts[j]
                    # perp(c - o) . d
                    u[j] = -(cy - oy) * dx + (cx - ox) * dy
                minv_u = _mat3_vec(minvs[f], u) if jpf == 3 else _matn_vec(minvs[f], u)
                w = sum(ui * mi for ui, mi in zip(u, minv_u))
                return u, minv_u, w

            un_a = ut_a = None
            minv_un_a = minv_ut_a = None
            wn = wt = 0.0
            if fa >= 0:
                un_a, minv_un_a, w1 = hand_terms(fa, nja, (nx, ny))
                ut_a, minv_ut_a, w2 = hand_terms(fa, nja, (tx, ty))
                wn += w1
                wt += w2
            un_b = ut_b = None
            minv_un_b = minv_ut_b = None
            obj_rn = obj_rt = 0.0
            is_obj = kind in ("fo", "po")
            if kind == "ff":
                un_b, minv_un_b, w1 = hand_terms(fb, njb, (nx, ny))
                ut_b, minv_ut_b, w2 = hand_terms(fb, njb, (tx, ty))
                wn += w1
                wt += w2
            elif is_obj:
                rx, ry = cx - self.obj_x, cy - self.obj_y
                obj_rn = rx * ny - ry * nx
                obj_rt = rx * ty - ry * tx
                wn += self.inv_mass + obj_rn * obj_rn * self.inv_inertia
                wt += self.inv_mass + obj_rt * obj_rt * self.inv_inertia
            if wn < 1e-12:
                continue
            # patch-contact spin resistance: fingertips are pads, not points;
            # relative spin about the contact is damped within a torsional
            # friction cone proportional to the normal impulse
            w_spin = 0.0
            minv_us_a = minv_us_b = None
            if is_obj:
                w_spin = self.inv_inertia
                if fa >= 0:
                    us = [1.0 if j < nja else 0.0 for j in range(jpf)]
                    minv_us_a = _mat3_vec(minvs[fa], us) if jpf == 3 else _matn_vec(minvs[fa], us)
                    w_spin += sum(ui * mi for ui, mi in zip(us, minv_us_a))
            mu = math.sqrt(self.mu_hand * self.mu_obj) if is_obj else self.mu_hand
            acc_n, acc_t = self._warm.get(key, (0.0, 0.0))
            acc_s = self._warm_spin.get(key, 0.0)
            rows.append(
                {
                    "kind": kind,
                    "key": key,
                    "fa": fa,
                    "fb": fb,
                    "point": (cx, cy),
                    "n": (nx, ny),
                    "t": (tx, ty),
                    "pen": pen,
                    "minv_un_a": minv_un_a,
                    "minv_ut_a": minv_ut_a,
                    "minv_un_b": minv_un_b,
                    "minv_ut_b": minv_ut_b,
                    "kn": 1.0 / wn,
                    "kt": 1.0 / wt if wt > 1e-12 else 0.0,
                    "ks": 1.0 / w_spin if w_spin > 1e-12 else 0.0,
                    "minv_us_a": minv_us_a,
                    "nja": nja,
                    "obj_rn": obj_rn,
                    "obj_rt": obj_rt,
                    "is_obj": is_obj,
                    "mu": mu,
                    "acc_n": acc_n,
                    "acc_t": acc_t,
                    "acc_s": acc_s,
                }
            )
        return rows

    def _rel_vel(self, row, direction):
        """Relative velocity of A w.r.t. B along a unit direction."""
        cfg = self.cfg
        jpf = cfg.joints_per_finger
        dx, dy = direction
        cx, cy = row["point"]
        v = 0.0
        if row["fa"] >= 0:
            base = row["fa"] * jpf
            pts = self._chains_cache[row["fa"]]
            for j in range(jpf):
                ox, oy = pts[j]
                u = -(cy - oy) * dx + (cx - ox) * dy
                v += u * self.q_dot[base + j]
        if row["kind"] == "ff":
            base = row["fb"] * jpf
            pts = self._chains_cache[row["fb"]]
            for j in range(jpf):
                ox, oy = pts[j]
                u = -(cy - oy) * dx + (cx - ox) * dy
                v -= u * self.q_dot[base + j]
        elif row["is_obj"]:
            rx, ry = cx - self.obj_x, cy - self.obj_y
            vpx = self.obj_vx - self.obj_w * ry
            vpy = self.obj_vy + self.obj_w * rx
            v -= vpx * dx + vpy * dy
        return v

    def _apply_impulse(self, row, lam_n, lam_t):
        cfg = self.cfg
        jpf = cfg.joints_per_finger
        if row["fa"] >= 0:
            base = row["fa"] * jpf
            mu_n = row["minv_un_a"]
            mu_t = row["minv_ut_a"]
            for j in range(jpf):
                self.q_dot[base + j] += mu_n[j] * lam_n + mu_t[j] * lam_t
        if row["kind"] == "ff":
            base = row["fb"] * jpf
            mu_n = row["minv_un_b"]
            mu_t = row["minv_ut_b"]
            for j in range(jpf):
                self.q_dot[base + j] -= mu_n[j] * lam_n + mu_t[j] * lam_t
        elif row["is_obj"]:
            nx, ny = row["n"]
            tx, ty = row["t"]
            px = nx * lam_n + tx * lam_t
            py = ny * lam_n + ty * lam_t
            self.obj_vx -= px * self.inv_mass
            self.obj_vy -= py * self.inv_mass
            self.obj_w -= (row["obj_rn"] * lam_n + row["obj_rt"] * lam_t) * self.inv_inertia

    def _rel_spin(self, row):
        """Object spin relative to the touching link (0 for the palm)."""
        s = self.obj_w
        if row["fa"] >= 0:
            base = row["fa"] * self.cfg.joints_per_finger
            for j in range(row["nja"]):
                s -= self.q_dot[base + j]
        return s

    def _apply_spin_impulse(self, row, lam):
        self.obj_w -= lam * self.inv_inertia
        if row["fa"] >= 0:
            base = row["fa"] * self.cfg.joints_per_finger
            mu_s = row["minv_us_a"]
            for j in range(self.cfg.joints_per_finger):
                self.q_dot[base + j] += mu_s[j] * lam

    # effective lever arm of the torsional (patch) friction cone
    SPIN_ARM = 0.004

    def _solve_velocity(self, rows, iters):
        # warm start
        for row in rows:
            if row["acc_n"] != 0.0 or row["acc_t"] != 0.0:
                self._apply_impulse(row, row["acc_n"], row["acc_t"])
            if row["acc_s"] != 0.0 and row["ks"] != 0.0:
                self._apply_spin_impulse(row, row["acc_s"])
        for _ in range(iters):
            for row in rows:
                # friction
                vt = self._rel_vel(row, row["t"])
                lam = -vt * row["kt"]
                max_f = row["mu"] * row["acc_n"]
                new_acc = max(-max_f, min(max_f, row["acc_t"] + lam))
                lam = new_acc - row["acc_t"]
                row["acc_t"] = new_acc
                if lam != 0.0:
                    self._apply_impulse(row, 0.0, lam)
                # torsional friction on patch contacts
                if row["ks"] != 0.0:
                    vs = self._rel_spin(row)
                    lam = -vs * row["ks"]
                    max_s = row["mu"] * row["acc_n"] * self.SPIN_ARM
                    new_acc = max(-max_s, min(max_s, row["acc_s"] + lam))
                    lam = new_acc - row["acc_s"]
                    row["acc_s"] = new_acc
                    if lam != 0.0:
                        self._apply_spin_impulse(row, lam)
                # normal, no restitution
                vn = self._rel_vel(row, row["n"])
                lam = -vn * row["kn"]
                new_acc = max(0.0, row["acc_n"] + lam)
                lam = new_acc - row["acc_n"]
                row["acc_n"] = new_acc
                if lam != 0.0:
                    self._apply_impulse(row, lam, 0.0)

    def _solve_position(self, iters):
        """Split-impulse penetration removal; touches positions only."""
        cfg = self.cfg
        beta = cfg.baumgarte
        slop = cfg.contact_slop
        max_corr = 0.005
        jpf = cfg.joints_per_finger
        matvec = _mat3_vec if jpf == 3 else _matn_vec
        for _ in range(iters):
            chains = self._chains(self.q)
            minvs = self._finger_mass_inv(chains)
            entries = self._detect_contacts(chains, margin=-slop)
            worst = 0.0
            for (kind, key, fa, nja, pa, fb, njb, pb, n, pen) in entries:
                corr = beta * min(max_corr, max(0.0, pen - slop))
                if corr <= 0.0:
                    continue
                worst = max(worst, pen)
                nx, ny = n
                cx, cy = pa
                w = 0.0
                minv_u_a = minv_u_b = None
                if fa >= 0:
                    pts = chains[fa]
                    u = [0.0] * jpf
                    for j in range(nja):
                        ox, oy = pts[j]
                        u[j] = -(cy - oy) * nx + (cx - ox) * ny
                    minv_u_a = matvec(minvs[fa], u)
                    w += sum(ui * mi for ui, mi in zip(u, minv_u_a))
                obj_rn = 0.0
                if kind == "ff":
                    pts = chains[fb]
                    u = [0.0] * jpf
                    for j in range(njb):
                        ox, oy = pts[j]
                        u[j] = -(cy - oy) * nx + (cx - ox) * ny
                    minv_u_b = matvec(minvs[fb], u)
                    w += sum(ui * mi for ui, mi in zip(u, minv_u_b))
                elif kind in ("fo", "po"):
                    rx, ry = cx - self.obj_x, cy - self.obj_y
                    obj_rn = rx * ny - ry * nx
                    w += self.inv_mass + obj_rn * obj_rn * self.inv_inertia
                if w < 1e-12:
                    continue
                lam = corr / w
                if fa >= 0:
                    base = fa * jpf
                    for j in range(jpf):
                        self.q[base + j] += minv_u_a[j] * lam
                if kind == "ff":
                    base = fb * jpf
                    for j in range(jpf):
                        self.q[base + j] -= minv_u_b[j] * lam
                elif kind in ("fo", "po"):
                    self.obj_x -= nx * lam * self.inv_mass
                    self.obj_y -= ny * lam * self.inv_mass
                    self.obj_th -= obj_rn * lam * self.inv_inertia
            if worst < slop * 4.0:
                break
        self._clamp_limits()

    def _clamp_limits(self):
        for i in range(self.cfg.dof):
            if self.q[i] < self.limits_lo[i]:
                self.q[i] = self.limits_lo[i]
                if self.q_dot[i] < 0.0:
                    self.q_dot[i] = 0.0
            elif self.q[i] > self.limits_hi[i]:
                self.q[i] = self.limits_hi[i]
                if self.q_dot[i] > 0.0:
                    self.q_dot[i] = 0.0

    # -- stepping ---------------------------------------------------------

    def substep(self, h: float):
        cfg = self.cfg
        jpf = cfg.joints_per_finger
        chains = self._chains(self.q)
        self._chains_cache = chains
        mats, minvs = self._finger_masses(chains)

        # implicit PD: (M + h Kd I) v' = M v + h * (clamp(Kp e) - bias)
        kp, kd = self.kp, self.kd
        tl = cfg.torque_limit
        biases = self._bias_torques(chains)
        for f in range(cfg.n_fingers):
            base = f * jpf
            M = mats[f]
            bias = biases[f]
            rhs = [0.0] * jpf
            for i in range(jpf):
                e = self.q_target[base + i] - self.q[base + i]
                tau = kp * e
                tau = max(-tl, min(tl, tau))
                rhs[i] = h * (tau - bias[i])
                for j in range(jpf):
                    rhs[i] += M[i][j] * self.q_dot[base + j]
            A = [[M[i][j] + (h * kd if i == j else 0.0) for j in range(jpf)] for i in range(jpf)]
            Ainv = _inv3(A) if jpf == 3 else _inv_generic(A)
            vnew = _mat3_vec(Ainv, rhs) if jpf == 3 else _matn_vec(Ainv, rhs)
            for i in range(jpf):
                e = self.q_target[base + i] - self.q[base + i]
                tau_p = max(-tl, min(tl, kp * e))
                self._tau_accum[base + i] += tau_p - kd * vnew[i]
                self.q_dot[base + i] = vnew[i]

        self.obj_vx += h * (self.gravity[0] + self.rf_x * self.inv_mass)
        self.obj_vy += h * (self.gravity[1] + self.rf_y * self.inv_mass)

        entries = self._detect_contacts(chains)
        rows = self._contact_setup(entries, chains, minvs)
        self._solve_velocity(rows, cfg.solver_velocity_iters)

        self._warm = {row["key"]: (row["acc_n"], row["acc_t"]) for row in rows}
        self._warm_spin = {row["key"]: row["acc_s"] for row in rows}
        self.contacts = [
            Contact(
                finger=row["fa"] if row["kind"] == "fo" else -1,
                keypoint=row["key"][2] if row["kind"] == "fo" else -1,
                point=row["point"],
                normal=row["n"],
                normal_force=row["acc_n"] / h,
            )
            for row in rows
            if row["is_obj"] and row["acc_n"] > 0.0
        ]

        for i in range(cfg.dof):
            self.q[i] += h * self.q_dot[i]
        self.obj_x += h * self.obj_vx
        self.obj_y += h * self.obj_vy
        self.obj_th = wrap_angle(self.obj_th + h * self.obj_w)

        self._clamp_limits()
        self._solve_position(cfg.solver_position_iters)
        self.time += h

        if not all(map(math.isfinite, self.q)) or not math.isfinite(
            self.obj_x + self.obj_y + self.obj_th
        ):
            raise SimulationDiverged(f"non-finite state at t={self.time:.3f}")

    def step(self, q_target) -> Observation:
        """One control tick: random-force schedule, action noise, substeps,
        drop bookkeeping, noisy observation."""
        cfg = self.cfg
        if len(q_target) != cfg.dof:
            raise ValueError(f"q_target length {len(q_target)} != dof {cfg.dof}")
        if not all(math.isfinite(v) for v in q_target):
            raise ValueError("q_target must be finite")

        # random force schedule, at the control rate
        dr = self.dr
        decay = dr.random_force_decay ** (cfg.control_dt / dr.random_force_interval)
        self.rf_x *= decay
        self.rf_y *= decay
        if dr.random_force_prob > 0.0:
            if self.rng.uniform() < dr.random_force_prob:
                fx, fy = self.rng.normal(0.0, 1.0, 2)
                self.rf_x = float(fx) * self.object_mass * self.rf_scale
                self.rf_y = float(fy) * self.object_mass * self.rf_scale

        self.q_target = [
            max(self.limits_lo[i], min(self.limits_hi[i], float(q_target[i])))
            for i in range(cfg.dof)
        ]
        if dr.action_noise > 0.0:
            noise = self.rng.normal(0.0, dr.action_noise, cfg.dof)
            self.q_target = [
                max(self.limits_lo[i], min(self.limits_hi[i], self.q_target[i] + float(noise[i])))
                for i in range(cfg.dof)
            ]

        h = cfg.physics_dt
        self._tau_accum = [0.0] * cfg.dof
        for _ in range(cfg.substeps):
            self.substep(h)
        self.last_torque = [t / cfg.substeps for t in self._tau_accum]

        if self.contacts:
            self.last_contact_time = self.time
            self.contact_loss_pos = None
        elif self.contact_loss_pos is None:
            self.contact_loss_pos = (self.obj_x, self.obj_y)

        self.tick += 1
        if not self.dropped_flag and self.detect_drop():
            self.dropped_flag = True
        return self.observe()

    def observe(self) -> Observation:
        cfg = self.cfg
        dr = self.dr
        if dr.joint_obs_white_noise > 0.0:
            white = self.rng.normal(0.0, dr.joint_obs_white_noise, cfg.dof)
        else:
            white = [0.0] * cfg.dof
        q_obs = [
            self.q[i] + self.obs_offset[i] + float(white[i]) for i in range(cfg.dof)
        ]
        kps = hand_keypoints(cfg, q_obs)
        return Observation(
            time=self.time,
            keypoints=kps,
            q=q_obs,
            q_target=list(self.q_target),
            ctrl_error=[t - qi for t, qi in zip(self.q_target, q_obs)],
            contact_count=len(self.contacts),
            dropped=self.dropped_flag,
        )

    def detect_drop(self) -> bool:
        """Object fell below the palm or escaped the hand entirely."""
        if self.dropped_flag:
            return True
        if self.obj_y < -self.shape.bounding_radius():
            return True
        if self.contact_loss_pos is not None:
            lost_for = self.time - self.last_contact_time
            if lost_for > 0.5:
                dx = self.obj_x - self.contact_loss_pos[0]
                dy = self.obj_y - self.contact_loss_pos[1]
                if math.hypot(dx, dy) > 0.02:
                    return True
        return False

    # -- persistence -------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "version": _SNAPSHOT_VERSION,
            "q": list(self.q),
            "q_dot": list(self.q_dot),
            "q_target": list(self.q_target),
            "object_pose": [self.obj_x, self.obj_y, self.obj_th],
            "object_vel": [self.obj_vx, self.obj_vy, self.obj_w],
            "time": self.time,
            "seed": self.seed,
            "config_hash": self.cfg.config_hash(),
        }

    def set_state(self, q, q_dot, object_pose, object_vel, q_target=None):
        """Teleport to an explicit mechanical state (used by episode resets)."""
        self.q = [float(v) for v in q]
        self.q_dot = [float(v) for v in q_dot]
        self.q_target = [float(v) for v in (q_target if q_target is not None else q)]
        self.obj_x, self.obj_y, self.obj_th = map(float, object_pose)
        self.obj_vx, self.obj_vy, self.obj_w = map(float, object_vel)
        self._warm = {}
        self._warm_spin = {}
        self.contacts = []
        self.last_contact_time = self.time
        self.contact_loss_pos = None
        self.dropped_flag = False


def _inv_generic(m):
    arr = np.linalg.inv(np.asarray(m, dtype=float))
    return tuple(tuple(float(x) for x in row) for row in arr)


def _matn_vec(m, v):
    return tuple(sum(m[i][j] * v[j] for j in range(len(v))) for i in range(len(m)))


def create_world(cfg: SimConfig, dr: DomainRandomization, seed: int) -> World:
    """Build a randomized world; identical seeds give identical worlds."""
    return World(cfg, dr, seed)
