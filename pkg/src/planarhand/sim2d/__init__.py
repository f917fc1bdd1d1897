from .config import SimConfig, DomainRandomization, ConfigError
from .geometry import Disk, ConvexPolygon, shape_from_json, square, regular_polygon, BUILTIN_SHAPES
from .kinematics import (
    finger_fk,
    hand_keypoints,
    hand_joint_points,
    keypoint_count,
    finger_ik,
    finger_ik_search,
    two_link_ik,
    wrap_angle,
)
from .world import World, Observation, Contact, create_world, pd_torque, SimulationDiverged

__all__ = [
    "SimConfig",
    "DomainRandomization",
    "ConfigError",
    "Disk",
    "ConvexPolygon",
    "shape_from_json",
    "square",
    "regular_polygon",
    "BUILTIN_SHAPES",
    "finger_fk",
    "hand_keypoints",
    "hand_joint_points",
    "keypoint_count",
    "finger_ik",
    "finger_ik_search",
    "two_link_ik",
    "wrap_angle",
    "World",
    "Observation",
    "Contact",
    "create_world",
    "pd_torque",
    "SimulationDiverged",
]
