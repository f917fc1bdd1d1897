from .cache import CACHE_VERSION, CacheFormatError, Grasp, GraspCache, GraspValidationError, grasp_distance
from .force import grasp_analysis, net_force_min
from .goals import next_goal
from .rrt import RrtStats, fix_contact_and_collision, generate_grasps, rrt_expand
from .surface import CONTACT_ARITIES, draw_arity, sample_surface
from .synth import GraspGenParams, SynthesisError, assign_fingers, check_collision_free, heuristic_sample, random_pose

__all__ = [
    "CACHE_VERSION",
    "CacheFormatError",
    "Grasp",
    "GraspCache",
    "GraspValidationError",
    "grasp_distance",
    "grasp_analysis",
    "net_force_min",
    "next_goal",
    "RrtStats",
    "fix_contact_and_collision",
    "generate_grasps",
    "rrt_expand",
    "CONTACT_ARITIES",
    "draw_arity",
    "sample_surface",
    "GraspGenParams",
    "SynthesisError",
    "assign_fingers",
    "check_collision_free",
    "heuristic_sample",
    "random_pose",
]
