"""The assembled 10 Hz controller: proprioception history in, joint targets
out, with optional motion guidance."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..sim2d.config import SimConfig
from ..sim2d.world import Observation
from .diffusion import Normalizer, clamp_motion, ddim_sample
from .nets import InverseDynamics, MotionDenoiser, Tensor, mode_one_hot
from .invdyn import invdyn_predict

HISTORY_TICKS = 4


@dataclass
class ControllerConfig:
    guidance_strength: float = 2.0
    ddim_steps: int = 8
    motion_cap: float = 0.03
    horizon: int = 2

    def __post_init__(self):
        if self.guidance_strength < 0:
            raise ValueError("guidance strength must be >= 0")

    def to_json(self):
        return {
            "guidance_strength": self.guidance_strength,
            "ddim_steps": self.ddim_steps,
            "motion_cap": self.motion_cap,
            "horizon": self.horizon,
        }

    @classmethod
    def from_json(cls, doc):
        return cls(**doc)


class StateHistory:
    """Rolling stack of the last 4 control ticks of proprioception.

    Per tick: keypoint positions (2K), joint positions, joint targets, and
    control error. The first observation back-fills the whole window.
    """

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.k = 2 * cfg.n_fingers
        self.per_tick = 2 * self.k + 3 * cfg.dof
        self.buf: deque = deque(maxlen=HISTORY_TICKS)

    def push(self, obs: Observation):
        row = np.empty(self.per_tick, dtype=np.float32)
        kp = np.asarray(obs.keypoints, dtype=np.float32).reshape(-1)
        n = 2 * self.k
        row[:n] = kp
        row[n : n + self.cfg.dof] = obs.q
        row[n + self.cfg.dof : n + 2 * self.cfg.dof] = obs.q_target
        row[n + 2 * self.cfg.dof :] = obs.ctrl_error
        if not self.buf:
            for _ in range(HISTORY_TICKS):
                self.buf.append(row.copy())
        else:
            self.buf.append(row)

    @property
    def full(self) -> bool:
        return len(self.buf) == HISTORY_TICKS

    def features(self) -> np.ndarray:
        if not self.buf:
            raise ValueError("history is empty")
        return np.concatenate(list(self.buf))

    @property
    def dim(self) -> int:
        return HISTORY_TICKS * self.per_tick

    def reset(self):
        self.buf.clear()


def action_to_targets(cfg: SimConfig, action_norm: np.ndarray) -> np.ndarray:
    """Normalized [-1, 1] action to joint targets in radians."""
    lo, hi = cfg.joint_limits()
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    return lo + (np.clip(action_norm, -1.0, 1.0) + 1.0) * 0.5 * (hi - lo)


def targets_to_action(cfg: SimConfig, q_target) -> np.ndarray:
    lo, hi = cfg.joint_limits()
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    return np.clip(2.0 * (np.asarray(q_target) - lo) / (hi - lo) - 1.0, -1.0, 1.0)


class Controller:
    """Denoise a keypoint motion, then decode it to a joint target."""

    def __init__(
        self,
        sim_cfg: SimConfig,
        denoiser: MotionDenoiser,
        invdyn: InverseDynamics,
        schedule,
        obs_norm: Normalizer,
        dx_norm: Normalizer,
        cfg: ControllerConfig | None = None,
    ):
        self.sim_cfg = sim_cfg
        self.denoiser = denoiser
        self.invdyn = invdyn
        self.schedule = schedule
        self.obs_norm = obs_norm
        self.dx_norm = dx_norm
        self.cfg = cfg or ControllerConfig()
        self.k = 2 * sim_cfg.n_fingers

    def sample_motion(self, history_feats, mode: str, rng, dx_input=None, alpha_g=None):
        """One guided DDIM draw, denormalized and capped; (T, K, 2) meters."""
        cfg = self.cfg
        alpha = cfg.guidance_strength if alpha_g is None else alpha_g
        obs_n = self.obs_norm.encode(history_feats)[None]
        cond_sm = self.denoiser.encode_condition(obs_n, mode_one_hot(mode)[None])
        guide = None
        if dx_input is not None:
            dx_in = clamp_motion(np.asarray(dx_input, dtype=np.float32), cfg.motion_cap)
            tiled = np.tile(dx_in[None], (cfg.horizon, 1, 1)).reshape(-1)
            guide = self.dx_norm.encode(tiled)
        z = ddim_sample(
            self.denoiser,
            cond_sm,
            self.schedule,
            rng,
            steps=cfg.ddim_steps,
            dx_input_norm=guide,
            alpha_g=alpha,
        )
        dx_flat = self.dx_norm.decode(z[0])
        dx = dx_flat.reshape(cfg.horizon, self.k, 2)
        return clamp_motion(dx, cfg.motion_cap)

    def act(self, history: StateHistory, dx_input, mode: str, rng, alpha_g=None):
        """q_target (radians) for the next tick.

        dx_input is a (K, 2) commanded keypoint offset in meters or None for
        unconditioned sampling.
        """
        if not history.full:
            raise ValueError("controller needs a full 4-tick history")
        feats = history.features()
        dx = self.sample_motion(feats, mode, rng, dx_input, alpha_g)
        obs_n = self.obs_norm.encode(feats)
        dx_n = self.dx_norm.encode(dx.reshape(-1))
        act_norm, _ = invdyn_predict(self.invdyn, obs_n, dx_n)
        return action_to_targets(self.sim_cfg, act_norm), dx
