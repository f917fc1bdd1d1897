"""Inverse-dynamics head training: MSE regression from (state, achieved
keypoint motion) to the normalized action that produced it."""

from __future__ import annotations

import math

import numpy as np

from ..neuralcore import AdamW, AdamWHyper, Tensor, mean, no_grad, square, sub
from .diffusion import TrainingDiverged
from .nets import InverseDynamics


class InvDynTrainer:
    def __init__(self, model: InverseDynamics, hyper: AdamWHyper | None = None):
        self.model = model
        self.opt = AdamW(model.parameters(), hyper or AdamWHyper(lr=5e-4, weight_decay=1e-4))

    def train_step(self, obs, dx, act) -> float:
        pred = self.model(Tensor(obs), Tensor(dx))
        loss_t = mean(square(sub(pred, Tensor(act))))
        loss = loss_t.item()
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite inverse-dynamics loss {loss}")
        self.opt.zero_grad()
        loss_t.backward()
        self.opt.step()
        return loss

    def fit_std(self, obs, dx, act, batch: int = 512):
        """Per-dim residual spread on a held-in slice; fills model.std."""
        preds = []
        with no_grad():
            for i in range(0, len(obs), batch):
                preds.append(self.model(obs[i : i + batch], dx[i : i + batch]).numpy())
        resid = np.concatenate(preds) - act
        self.model.std = np.maximum(resid.std(axis=0), 1e-4).astype(np.float32)


def invdyn_predict(model: InverseDynamics, obs_norm: np.ndarray, dx_norm: np.ndarray):
    """(mean normalized action, per-dim std). Batch or single row."""
    single = obs_norm.ndim == 1
    if single:
        obs_norm = obs_norm[None]
        dx_norm = dx_norm[None]
    with no_grad():
        out = model(obs_norm.astype(np.float32), dx_norm.astype(np.float32)).numpy()
    out = np.clip(out, -1.0, 1.0)
    if single:
        return out[0], model.std.copy()
    return out, model.std.copy()
