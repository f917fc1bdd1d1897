"""Training and sampling for the keypoint-motion diffusion model.

Guidance: at every DDIM step the predicted clean sample is nudged by
-alpha_g * sigma_t^2 * grad Dist(x0_hat, dx_input), where sigma_t^2 is the
DDPM posterior variance of the matching step (pure-deterministic DDIM has
sigma = 0, which would switch guidance off; the DDPM variance is used as
the guidance scale only). The commanded motion never enters the denoiser;
it acts only through this correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..neuralcore import AdamW, AdamWHyper, Tensor, mean, mul, no_grad, square, sub
from .nets import MotionDenoiser, mode_one_hot
from .schedule import NoiseSchedule, ddim_step_indices, diffuse_forward


class TrainingDiverged(RuntimeError):
    pass


class ModelNotTrained(RuntimeError):
    pass


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def encode(self, x):
        return (np.asarray(x, dtype=np.float32) - self.mean) / self.std

    def decode(self, z):
        return np.asarray(z, dtype=np.float32) * self.std + self.mean

    def to_json(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, doc):
        return cls(
            mean=np.asarray(doc["mean"], dtype=np.float32),
            std=np.asarray(doc["std"], dtype=np.float32),
        )

    @classmethod
    def fit(cls, data: np.ndarray, min_std: float = 1e-4) -> "Normalizer":
        return cls(
            mean=data.mean(axis=0).astype(np.float32),
            std=np.maximum(data.std(axis=0), min_std).astype(np.float32),
        )


def dist(dx: np.ndarray, dx_input: np.ndarray) -> float:
    """sum_i || dx_i - dx_input ||^2 with the input broadcast over the horizon.

    dx is (T, K, 2); dx_input is (K, 2).
    """
    dx = np.asarray(dx, dtype=np.float64)
    dx_input = np.asarray(dx_input, dtype=np.float64)
    if dx.ndim != 3 or dx.shape[1:] != dx_input.shape:
        raise ValueError(f"shape mismatch: dx {dx.shape} vs input {dx_input.shape}")
    diff = dx - dx_input[None]
    return float((diff**2).sum())


def dist_grad(dx: np.ndarray, dx_input: np.ndarray) -> np.ndarray:
    """Analytic gradient of dist w.r.t. dx: 2 (dx_i - dx_input)."""
    dx = np.asarray(dx, dtype=np.float64)
    dx_input = np.asarray(dx_input, dtype=np.float64)
    if dx.ndim != 3 or dx.shape[1:] != dx_input.shape:
        raise ValueError(f"shape mismatch: dx {dx.shape} vs input {dx_input.shape}")
    return 2.0 * (dx - dx_input[None])


def guided_reverse_step(mu: np.ndarray, sigma2: float, dx_input: np.ndarray, alpha_g: float) -> np.ndarray:
    """mu' = mu - alpha_g * sigma2 * grad Dist(mu, dx_input)."""
    if alpha_g == 0.0 or dx_input is None:
        return mu
    return mu - alpha_g * sigma2 * dist_grad(mu, dx_input).astype(mu.dtype)


@dataclass
class DiffusionTrainer:
    model: MotionDenoiser
    schedule: NoiseSchedule
    horizon: int
    n_keypoints: int
    hyper: AdamWHyper = None

    def __post_init__(self):
        self.hyper = self.hyper or AdamWHyper(lr=3e-4, weight_decay=1e-4)
        self.opt = AdamW(self.model.parameters(), self.hyper)

    def train_step(self, obs, modes, dx_flat, rng) -> float:
        """One optimizer step on a normalized batch.

        Loss is the per-2D-point squared error summed over the two
        coordinates and averaged over batch, horizon, and keypoints:
        2 * mean((eps - eps_hat)^2). An untrained (zero-output) denoiser on
        unit-variance noise therefore starts at exactly 2.0 in expectation.
        """
        b = dx_flat.shape[0]
        t = rng.integers(1, self.schedule.steps + 1, size=b)
        eps = rng.standard_normal(dx_flat.shape).astype(np.float32)
        ab = self.schedule.alpha_bars[t - 1].astype(np.float32)[:, None]
        x_t = np.sqrt(ab) * dx_flat + np.sqrt(1.0 - ab) * eps

        cond_sm = self.model.encode_condition(obs, modes)
        cond = self.model.cond_with_t(cond_sm, t)
        eps_hat = self.model.eps(Tensor(x_t), cond)
        loss_t = mul(mean(square(sub(eps_hat, Tensor(eps)))), 2.0)
        loss = loss_t.item()
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite diffusion loss {loss}")
        self.opt.zero_grad()
        loss_t.backward()
        self.opt.step()
        self.model.trained = True
        return loss


def ddim_sample(
    model: MotionDenoiser,
    cond_sm,
    schedule: NoiseSchedule,
    rng,
    steps: int = 8,
    dx_input_norm: np.ndarray | None = None,
    alpha_g: float = 0.0,
):
    """Deterministic DDIM trajectory from one draw of initial noise.

    Operates in normalized motion space; returns a (B, x_dim) array.
    cond_sm is the precomputed state/mode conditioning (Tensor, B rows).
    """
    if steps not in (8, 12):
        raise ValueError("ddim steps must be 8 or 12")
    if not getattr(model, "trained", False):
        raise ModelNotTrained("refusing to sample from an untrained denoiser")
    b = cond_sm.shape[0]
    x = rng.standard_normal((b, model.x_dim)).astype(np.float32)
    ladder = ddim_step_indices(schedule, steps)
    guide = None
    if dx_input_norm is not None:
        guide = np.asarray(dx_input_norm, dtype=np.float32).reshape(1, -1)
    with no_grad():
        for i, t in enumerate(ladder):
            t_next = ladder[i + 1] if i + 1 < len(ladder) else 0
            cond = model.cond_with_t(cond_sm, np.full(b, t))
            eps_hat = model.eps(Tensor(x), cond).numpy()
            ab = schedule.alpha_bar(t)
            x0_hat = (x - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)
            if guide is not None and alpha_g > 0.0:
                # guidance on the predicted clean sample, DDPM variance scale
                s2 = schedule.posterior_var(t)
                x0_hat = x0_hat - alpha_g * s2 * 2.0 * (x0_hat - guide)
            ab_next = schedule.alpha_bar(t_next)
            x = math.sqrt(ab_next) * x0_hat + math.sqrt(1.0 - ab_next) * eps_hat
    return x


def clamp_motion(dx: np.ndarray, cap: float) -> np.ndarray:
    """Per-keypoint, per-horizon-slice norm clamp; dx is (..., T, K, 2)."""
    norms = np.linalg.norm(dx, axis=-1, keepdims=True)
    scale = np.minimum(1.0, cap / np.maximum(norms, 1e-12))
    return dx * scale
