from .schedule import NoiseSchedule, ddim_step_indices, diffuse_forward
from .nets import InverseDynamics, MotionDenoiser, MODES, mode_one_hot, timestep_embedding
from .diffusion import (
    DiffusionTrainer,
    ModelNotTrained,
    Normalizer,
    TrainingDiverged,
    clamp_motion,
    ddim_sample,
    dist,
    dist_grad,
    guided_reverse_step,
)
from .invdyn import InvDynTrainer, invdyn_predict
from .pipeline import Controller, ControllerConfig, StateHistory, action_to_targets, targets_to_action
from .bundle import BundleError, load_bundle, save_bundle

__all__ = [
    "NoiseSchedule", "ddim_step_indices", "diffuse_forward",
    "InverseDynamics", "MotionDenoiser", "MODES", "mode_one_hot", "timestep_embedding",
    "DiffusionTrainer", "ModelNotTrained", "Normalizer", "TrainingDiverged",
    "clamp_motion", "ddim_sample", "dist", "dist_grad", "guided_reverse_step",
    "InvDynTrainer", "invdyn_predict",
    "Controller", "ControllerConfig", "StateHistory", "action_to_targets", "targets_to_action",
    "BundleError", "load_bundle", "save_bundle",
]
