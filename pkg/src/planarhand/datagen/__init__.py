from .rewards import AchievementThresholds, RewardCoeffs, goal_achieved, reward
from .expert import ExpertParams, PathExpert, SLOW_RATE, finger_contact_map, squeezed_targets, tree_path
from .episodes import Episode, ExpertPolicy, Transition, collect_episode, eligible_start_indices
from .dataset import (
    DatasetError,
    DatasetManifest,
    Stratum,
    build_dataset,
    dataset_columns,
    expert_params_for,
    file_hash,
    filter_dataset,
    load_dataset,
    record_fields,
)

__all__ = [
    "AchievementThresholds", "RewardCoeffs", "goal_achieved", "reward",
    "ExpertParams", "PathExpert", "SLOW_RATE", "finger_contact_map", "squeezed_targets", "tree_path",
    "Episode", "ExpertPolicy", "Transition", "collect_episode", "eligible_start_indices",
    "DatasetError", "DatasetManifest", "Stratum", "build_dataset", "dataset_columns",
    "expert_params_for", "file_hash", "filter_dataset", "load_dataset", "record_fields",
]
