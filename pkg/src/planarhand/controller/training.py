"""Dataset-file consumers: train the denoiser and the inverse-dynamics
head, then assemble a loadable controller bundle."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..neuralcore import AdamWHyper
from ..sim2d.config import SimConfig
from .diffusion import DiffusionTrainer, Normalizer
from .invdyn import InvDynTrainer
from .nets import InverseDynamics, MotionDenoiser
from .pipeline import ControllerConfig
from .schedule import NoiseSchedule
from .bundle import save_bundle


@dataclass
class TrainParams:
    steps: int = 6000
    batch: int = 128
    lr: float = 4e-4
    weight_decay: float = 1e-4
    width: int = 256
    seed: int = 0
    log_every: int = 500


def _norms_from_header(header):
    norm = header["normalization"]
    obs_norm = Normalizer(
        np.asarray(norm["obs_mean"], np.float32), np.asarray(norm["obs_std"], np.float32)
    )
    dx_norm = Normalizer(
        np.asarray(norm["dx_mean"], np.float32), np.asarray(norm["dx_std"], np.float32)
    )
    return obs_norm, dx_norm


def _columns(header, arr):
    f = header["fields"]

    def col(name):
        o, n = f[name]
        return arr[:, o : o + n]

    return col("obs"), col("action"), col("dx"), col("mode")


def train_diffusion_model(header, records, params: TrainParams, log=print):
    """Returns (denoiser, schedule, obs_norm, dx_norm, loss curve)."""
    rng = np.random.Generator(np.random.PCG64(params.seed))
    obs, act, dx, mode = _columns(header, records)
    obs_norm, dx_norm = _norms_from_header(header)
    obs_n = obs_norm.encode(obs)
    dx_n = dx_norm.encode(dx)
    model = MotionDenoiser(
        x_dim=dx.shape[1], obs_dim=obs.shape[1], rng=rng, width=params.width
    )
    schedule = NoiseSchedule()
    trainer = DiffusionTrainer(
        model,
        schedule,
        horizon=2,
        n_keypoints=dx.shape[1] // 4,
        hyper=AdamWHyper(lr=params.lr, weight_decay=params.weight_decay),
    )
    n = len(records)
    losses = []
    t0 = time.time()
    for step in range(params.steps):
        idx = rng.integers(0, n, params.batch)
        loss = trainer.train_step(obs_n[idx], mode[idx], dx_n[idx], rng)
        losses.append(loss)
        if params.log_every and (step + 1) % params.log_every == 0:
            log(
                f"  diffusion step {step + 1}/{params.steps} "
                f"loss {np.mean(losses[-params.log_every:]):.4f} "
                f"({time.time() - t0:.0f}s)"
            )
    return model, schedule, obs_norm, dx_norm, losses


def train_invdyn_model(header, records, params: TrainParams, log=print):
    """Returns (invdyn model, loss curve). Actions are already in [-1, 1]."""
    rng = np.random.Generator(np.random.PCG64(params.seed + 1))
    obs, act, dx, _ = _columns(header, records)
    obs_norm, dx_norm = _norms_from_header(header)
    obs_n = obs_norm.encode(obs)
    dx_n = dx_norm.encode(dx)
    model = InverseDynamics(
        obs_dim=obs.shape[1], dx_dim=dx.shape[1], act_dim=act.shape[1],
        rng=rng, width=params.width,
    )
    trainer = InvDynTrainer(
        model, AdamWHyper(lr=params.lr, weight_decay=params.weight_decay)
    )
    n = len(records)
    losses = []
    t0 = time.time()
    for step in range(params.steps):
        idx = rng.integers(0, n, params.batch)
        loss = trainer.train_step(obs_n[idx], dx_n[idx], act[idx])
        losses.append(loss)
        if params.log_every and (step + 1) % params.log_every == 0:
            log(
                f"  invdyn step {step + 1}/{params.steps} "
                f"loss {np.mean(losses[-params.log_every:]):.5f} "
                f"({time.time() - t0:.0f}s)"
            )
    hold = min(n, 4096)
    trainer.fit_std(obs_n[:hold], dx_n[:hold], act[:hold])
    return model, losses


def train_bundle(
    header,
    records,
    bundle_dir,
    diff_params: TrainParams | None = None,
    inv_params: TrainParams | None = None,
    ctrl_cfg: ControllerConfig | None = None,
    meta: dict | None = None,
    log=print,
):
    """Full training pass producing a bundle directory; returns its hash."""
    diff_params = diff_params or TrainParams()
    inv_params = inv_params or TrainParams(steps=4000)
    sim_cfg = SimConfig.from_json(header["sim"])
    denoiser, schedule, obs_norm, dx_norm, _ = train_diffusion_model(
        header, records, diff_params, log
    )
    invdyn, _ = train_invdyn_model(header, records, inv_params, log)
    return save_bundle(
        bundle_dir,
        sim_cfg,
        denoiser,
        invdyn,
        schedule,
        obs_norm,
        dx_norm,
        ctrl_cfg or ControllerConfig(),
        meta=meta,
    )
