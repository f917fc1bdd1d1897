"""Grasp records, the grasp-space metric, and the cache file format.

Cache files are JSON Lines: one header line, then one grasp per line with
fields {q, p:{x,y,theta}, contacts:[{px,py,nx,ny}], parent}. Contacts are
stored in the object frame with inward unit normals. Caches re-validate
every member on load.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..sim2d.config import SimConfig
from ..sim2d.geometry import BUILTIN_SHAPES, Shape, symmetric_angle_diff
from ..sim2d.kinematics import wrap_angle
from .force import net_force_min

CACHE_VERSION = 1


class CacheFormatError(ValueError):
    pass


class GraspValidationError(ValueError):
    pass


@dataclass
class Grasp:
    q: list
    p: tuple                 # object pose (x, y, theta)
    contacts: list           # [((px, py), (nx, ny))] in object frame, inward normals
    parent: int | None = None

    def to_json(self) -> dict:
        return {
            "q": [float(v) for v in self.q],
            "p": {"x": self.p[0], "y": self.p[1], "theta": self.p[2]},
            "contacts": [
                {"px": p[0], "py": p[1], "nx": n[0], "ny": n[1]}
                for p, n in self.contacts
            ],
            "parent": self.parent,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Grasp":
        return cls(
            q=[float(v) for v in doc["q"]],
            p=(float(doc["p"]["x"]), float(doc["p"]["y"]), float(doc["p"]["theta"])),
            contacts=[
                ((float(c["px"]), float(c["py"])), (float(c["nx"]), float(c["ny"])))
                for c in doc["contacts"]
            ],
            parent=doc.get("parent"),
        )

    def contact_points_world(self):
        x, y, th = self.p
        c, s = math.cos(th), math.sin(th)
        out = []
        for (px, py), (nx, ny) in self.contacts:
            out.append(
                (
                    (x + c * px - s * py, y + s * px + c * py),
                    (c * nx - s * ny, s * nx + c * ny),
                )
            )
        return out


def grasp_distance(a: Grasp, b: Grasp, weights, symmetry_order: int = 1) -> float:
    """w_q * ||q_a - q_b|| + w_pose * (||pos_a - pos_b|| + |wrap(dtheta)|).

    The orientation wrap respects the object's rotational symmetry.
    """
    w_q, w_pose = weights
    dq = math.sqrt(sum((x - y) ** 2 for x, y in zip(a.q, b.q)))
    dp = math.hypot(a.p[0] - b.p[0], a.p[1] - b.p[1])
    dth = abs(symmetric_angle_diff(a.p[2] - b.p[2], symmetry_order))
    return w_q * dq + w_pose * (dp + dth)


class GraspCache:
    """All grasps for one object plus vectorized distance queries."""

    def __init__(
        self,
        object_id: str,
        shape: Shape,
        metric_weights=(0.3, 1.0),
        f_thresh: float = 0.05,
        seed: int = 0,
        n_heuristic: int = 0,
        n_rrt: int = 0,
    ):
        self.object_id = object_id
        self.shape = shape
        self.metric_weights = tuple(metric_weights)
        self.f_thresh = f_thresh
        self.seed = seed
        self.n_heuristic = n_heuristic
        self.n_rrt = n_rrt
        self.grasps: list[Grasp] = []
        self._component: list[int] = []
        self._n_components = 0
        self._cap = 0
        self._n = 0
        self._qbuf = None
        self._posbuf = None
        self._thbuf = None

    def __len__(self):
        return len(self.grasps)

    def _grow(self, dof):
        new_cap = max(64, self._cap * 2)
        qb = np.zeros((new_cap, dof))
        pb = np.zeros((new_cap, 2))
        tb = np.zeros(new_cap)
        if self._n:
            qb[: self._n] = self._qbuf[: self._n]
            pb[: self._n] = self._posbuf[: self._n]
            tb[: self._n] = self._thbuf[: self._n]
        self._qbuf, self._posbuf, self._thbuf = qb, pb, tb
        self._cap = new_cap

    def append(self, grasp: Grasp):
        self.grasps.append(grasp)
        if grasp.parent is None:
            cid = self._n_components
            self._n_components += 1
        else:
            cid = self._component[grasp.parent]
        self._component.append(cid)
        if self._n >= self._cap:
            self._grow(len(grasp.q))
        self._qbuf[self._n] = grasp.q
        self._posbuf[self._n] = grasp.p[:2]
        self._thbuf[self._n] = grasp.p[2]
        self._n += 1

    def component_of(self, idx: int) -> int:
        return self._component[idx]

    def component_indices(self, cid: int) -> list:
        return [i for i, c in enumerate(self._component) if c == cid]

    def _arrays(self):
        return (
            self._qbuf[: self._n],
            self._posbuf[: self._n],
            self._thbuf[: self._n],
        )

    @property
    def symmetry_order(self) -> int:
        return getattr(self.shape, "symmetry_order", 1)

    def distances_from(self, grasp: Grasp, indices=None) -> np.ndarray:
        w_q, w_pose = self.metric_weights
        q = np.asarray(grasp.q)
        qs, pos, th = self._arrays()
        if indices is not None:
            qs, pos, th = qs[indices], pos[indices], th[indices]
        dq = np.sqrt(((qs - q) ** 2).sum(axis=1))
        dp = np.hypot(pos[:, 0] - grasp.p[0], pos[:, 1] - grasp.p[1])
        order = self.symmetry_order
        if order == 0:
            dth = np.zeros_like(dp)
        else:
            period = 2.0 * math.pi / order
            dth = np.abs(
                np.remainder(th - grasp.p[2] + period / 2.0, period) - period / 2.0
            )
        return w_q * dq + w_pose * (dp + dth)

    def nearest(self, grasp: Grasp) -> tuple[int, float]:
        d = self.distances_from(grasp)
        i = int(np.argmin(d))
        return i, float(d[i])

    def min_distance(self, grasp: Grasp) -> float:
        if not self.grasps:
            return math.inf
        return float(self.distances_from(grasp).min())

    # -- persistence ------------------------------------------------------

    def header(self) -> dict:
        return {
            "object_id": self.object_id,
            "seed": self.seed,
            "N": self.n_heuristic,
            "N_RRT": self.n_rrt,
            "F_thresh": self.f_thresh,
            "metric_weights": list(self.metric_weights),
            "version": CACHE_VERSION,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps(self.header(), sort_keys=True) + "\n")
            for g in self.grasps:
                fh.write(json.dumps(g.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path, cfg: SimConfig | None = None, validate: bool = True) -> "GraspCache":
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        if not lines:
            raise CacheFormatError(f"{path}: empty cache file")
        header = json.loads(lines[0])
        for key in ("object_id", "seed", "N", "N_RRT", "F_thresh", "metric_weights", "version"):
            if key not in header:
                raise CacheFormatError(f"{path}: header missing {key!r}")
        if header["version"] != CACHE_VERSION:
            raise CacheFormatError(f"{path}: unsupported cache version {header['version']}")
        object_id = header["object_id"]
        if object_id not in BUILTIN_SHAPES:
            raise CacheFormatError(f"{path}: unknown object_id {object_id!r}")
        cache = cls(
            object_id=object_id,
            shape=BUILTIN_SHAPES[object_id],
            metric_weights=tuple(header["metric_weights"]),
            f_thresh=header["F_thresh"],
            seed=header["seed"],
            n_heuristic=header["N"],
            n_rrt=header["N_RRT"],
        )
        for ln in lines[1:]:
            cache.append(Grasp.from_json(json.loads(ln)))
        if validate:
            cache.validate(cfg or SimConfig(object_shape=cache.shape))
        return cache

    def validate(self, cfg: SimConfig) -> None:
        """Re-check every member: boundary residency, force test, collisions."""
        from .synth import check_collision_free  # local import, avoids a cycle

        for i, g in enumerate(self.grasps):
            for (px, py), (nx, ny) in g.contacts:
                if abs(self.shape.signed_distance(px, py)) > 1e-6:
                    raise GraspValidationError(f"grasp {i}: contact off the boundary")
                if abs(math.hypot(nx, ny) - 1.0) > 1e-9:
                    raise GraspValidationError(f"grasp {i}: non-unit contact normal")
            if net_force_min([n for _, n in g.contacts]) >= self.f_thresh:
                raise GraspValidationError(f"grasp {i}: fails force analysis")
            ok, why = check_collision_free(cfg, self.shape, g.p, g.q)
            if not ok:
                raise GraspValidationError(f"grasp {i}: {why}")
