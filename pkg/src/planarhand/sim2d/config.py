"""Simulator configuration and per-episode randomization ranges."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

from .geometry import Shape, shape_from_json, BUILTIN_SHAPES


class ConfigError(ValueError):
    """Invalid simulator configuration."""


@dataclass
class SimConfig:
    n_fingers: int = 3
    joints_per_finger: int = 3
    link_lengths: tuple = (0.06, 0.05, 0.04)
    fingertip_radius: float = 0.012
    link_radius: float = 0.010
    link_mass: float = 0.08
    physics_dt: float = 1.0 / 120.0
    control_dt: float = 0.1
    gravity: tuple = (0.0, -9.81)
    # per-joint (lower, upper), same template for every finger
    joint_limit_template: tuple = ((0.20, 2.94), (-2.50, 2.50), (-2.50, 2.50))
    kp: float = 6.0
    kd: float = 0.17
    torque_limit: float = 2.0
    object_shape: Shape = field(default_factory=lambda: BUILTIN_SHAPES["disk"])
    object_init_pose: tuple = (0.0, 0.07, 0.0)
    # palm segment endpoints in the hand frame, plus its collision radius
    palm_segment: tuple = ((-0.085, 0.0), (0.085, 0.0))
    palm_radius: float = 0.008
    finger_base_xs: tuple = (-0.06, 0.0, 0.06)
    friction_hand: float = 0.85
    solver_velocity_iters: int = 10
    solver_position_iters: int = 4
    baumgarte: float = 0.2
    contact_slop: float = 1e-4

    @property
    def dof(self) -> int:
        return self.n_fingers * self.joints_per_finger

    @property
    def substeps(self) -> int:
        return round(self.control_dt / self.physics_dt)

    def joint_limits(self):
        """(dof, 2) lower/upper arrays as flat python lists."""
        lo, hi = [], []
        for _ in range(self.n_fingers):
            for j in range(self.joints_per_finger):
                a, b = self.joint_limit_template[j]
                lo.append(a)
                hi.append(b)
        return lo, hi

    def validate(self) -> None:
        ratio = self.control_dt / self.physics_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError(
                f"physics_dt {self.physics_dt} must divide control_dt {self.control_dt}"
            )
        if len(self.link_lengths) != self.joints_per_finger:
            raise ConfigError("link_lengths length must equal joints_per_finger")
        if any(l <= 0 for l in self.link_lengths):
            raise ConfigError("link_lengths must be positive")
        if len(self.finger_base_xs) != self.n_fingers:
            raise ConfigError("finger_base_xs length must equal n_fingers")
        for lo, hi in self.joint_limit_template:
            if not lo < hi:
                raise ConfigError(f"joint limit lower {lo} must be < upper {hi}")
        if self.object_shape.perimeter() <= 0:
            raise ConfigError("object shape has zero perimeter")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["object_shape"] = self.object_shape.to_json()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SimConfig":
        doc = dict(doc)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown SimConfig fields: {sorted(unknown)}")
        if "object_shape" in doc:
            doc["object_shape"] = shape_from_json(doc["object_shape"])
        for key in ("link_lengths", "gravity", "object_init_pose", "finger_base_xs"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if "joint_limit_template" in doc:
            doc["joint_limit_template"] = tuple(tuple(p) for p in doc["joint_limit_template"])
        if "palm_segment" in doc:
            doc["palm_segment"] = tuple(tuple(p) for p in doc["palm_segment"])
        return cls(**doc)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class DomainRandomization:
    object_mass_range: tuple = (0.03, 0.25)
    object_friction_range: tuple = (0.5, 1.2)
    shape_scale_range: tuple = (0.95, 1.05)
    init_joint_noise_range: tuple = (-0.05, 0.05)
    hand_friction_range: tuple = (0.5, 1.2)
    p_gain_mult_range: tuple = (0.8, 1.1)
    d_gain_mult_range: tuple = (0.7, 1.2)
    random_force_scales: tuple = (1.0, 2.0)
    random_force_prob: float = 0.2
    random_force_decay: float = 0.99
    random_force_interval: float = 0.1
    joint_obs_white_noise: float = 0.025
    joint_obs_episode_noise: float = 0.005
    action_noise: float = 0.05
    # planar stand-in for wrist-pose variation: gravity direction offset from
    # straight down, radians
    gravity_angle_range: tuple = (0.0, 0.0)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "DomainRandomization":
        doc = dict(doc)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown DomainRandomization fields: {sorted(unknown)}")
        for key, val in doc.items():
            if isinstance(val, list):
                doc[key] = tuple(val)
        return cls(**doc)

    @classmethod
    def disabled(cls) -> "DomainRandomization":
        """Degenerate ranges: every draw is the nominal value, no noise."""
        mid = lambda a, b: ((a + b) / 2.0, (a + b) / 2.0)
        return cls(
            object_mass_range=mid(0.03, 0.25),
            object_friction_range=mid(0.5, 1.2),
            shape_scale_range=(1.0, 1.0),
            init_joint_noise_range=(0.0, 0.0),
            hand_friction_range=mid(0.5, 1.2),
            p_gain_mult_range=(1.0, 1.0),
            d_gain_mult_range=(1.0, 1.0),
            random_force_scales=(0.0,),
            random_force_prob=0.0,
            joint_obs_white_noise=0.0,
            joint_obs_episode_noise=0.0,
            action_noise=0.0,
            gravity_angle_range=(0.0, 0.0),
        )
