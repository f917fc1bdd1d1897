"""Denoiser, conditioning encoders, and the inverse-dynamics head."""

from __future__ import annotations

import numpy as np

from ..neuralcore import (
    FiLM,
    GroupNorm,
    Linear,
    Module,
    Tensor,
    add,
    concat,
    matmul,
    silu,
)

T_EMBED_DIM = 64
MODE_DIM = 2
MODES = ("default", "precision")


def mode_one_hot(mode: str) -> np.ndarray:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    v = np.zeros(MODE_DIM, dtype=np.float32)
    v[MODES.index(mode)] = 1.0
    return v


def timestep_embedding(t, dim: int = T_EMBED_DIM) -> np.ndarray:
    """Sinusoidal embedding of (1-based) diffusion timesteps."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10_000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    return emb.astype(np.float32)


class CondBlock(Module):
    """Linear -> GroupNorm -> SiLU -> FiLM(cond), optional residual."""

    def __init__(self, in_dim, out_dim, cond_dim, rng, group_size=8, residual=False):
        self.lin = Linear(in_dim, out_dim, rng)
        self.norm = GroupNorm(out_dim, group_size)
        self.filmer = FiLM(cond_dim, out_dim, rng)
        self.residual = residual and in_dim == out_dim

    def forward(self, x, cond):
        h = self.filmer(silu(self.norm(self.lin(x))), cond)
        if self.residual:
            h = add(h, x)
        return h


class StateEncoder(Module):
    def __init__(self, obs_dim, width, out_dim, rng, layers=3, group_size=8):
        self.blocks = []
        d = obs_dim
        for _ in range(layers):
            b = _PlainBlock(d, width, rng, group_size)
            self.blocks.append(b)
            d = width
        self.out = Linear(d, out_dim, rng)

    def forward(self, x):
        for b in self.blocks:
            x = b(x)
        return self.out(x)


class _PlainBlock(Module):
    def __init__(self, in_dim, out_dim, rng, group_size=8):
        self.lin = Linear(in_dim, out_dim, rng)
        self.norm = GroupNorm(out_dim, group_size)

    def forward(self, x):
        return silu(self.norm(self.lin(x)))


class MotionDenoiser(Module):
    """FiLM-conditioned MLP U-Net predicting the added noise.

    Three encoder and three decoder blocks with skip connections; the
    conditioning vector (state embedding + mode embedding + timestep
    embedding) modulates every block. The output projection starts at zero
    so the untrained model predicts zero noise.
    """

    def __init__(self, x_dim: int, obs_dim: int, rng, width: int = 256, group_size: int = 8):
        self.x_dim = x_dim
        self.obs_dim = obs_dim
        self.width = width
        self.trained = False
        cond_core = width
        self.state_enc = StateEncoder(obs_dim, width, cond_core, rng)
        self.mode_enc = Linear(MODE_DIM, 32, rng)
        self.cond_mix = Linear(cond_core + 32 + T_EMBED_DIM, cond_core, rng)
        cd = cond_core
        self.inp = Linear(x_dim, width, rng)
        self.enc = [CondBlock(width, width, cd, rng, group_size) for _ in range(3)]
        self.mid = CondBlock(width, width, cd, rng, group_size)
        self.dec = [CondBlock(2 * width, width, cd, rng, group_size) for _ in range(3)]
        self.out = Linear(width, x_dim, rng, zero_init=True)

    def encode_condition(self, obs, mode_vec):
        """State/mode half of the conditioning; timestep is mixed in later."""
        s = self.state_enc(obs if isinstance(obs, Tensor) else Tensor(obs))
        m = self.mode_enc(mode_vec if isinstance(mode_vec, Tensor) else Tensor(mode_vec))
        return concat([s, m], axis=1)

    def cond_with_t(self, cond_sm, t):
        temb = Tensor(timestep_embedding(t))
        return silu(self.cond_mix(concat([cond_sm, temb], axis=1)))

    def eps(self, x_t, cond):
        """Predict noise; cond comes from cond_with_t."""
        h = self.inp(x_t if isinstance(x_t, Tensor) else Tensor(x_t))
        skips = []
        for b in self.enc:
            h = b(h, cond)
            skips.append(h)
        h = self.mid(h, cond)
        for b, s in zip(self.dec, reversed(skips)):
            h = b(concat([h, s], axis=1), cond)
        return self.out(h)


class InverseDynamics(Module):
    """Residual MLP mapping (state, keypoint motion) to a normalized action
    distribution. The mean is trained by regression; the per-dim spread is
    fitted from held-in residuals after training."""

    def __init__(self, obs_dim: int, dx_dim: int, act_dim: int, rng, width: int = 256, group_size: int = 8):
        self.obs_dim = obs_dim
        self.dx_dim = dx_dim
        self.act_dim = act_dim
        self.inp = Linear(obs_dim + dx_dim, width, rng)
        self.blocks = [
            CondBlockFree(width, rng, group_size) for _ in range(3)
        ]
        self.out = Linear(width, act_dim, rng)
        # filled in by the trainer from validation residuals
        self.std = np.full(act_dim, 0.1, dtype=np.float32)

    def forward(self, obs, dx):
        obs = obs if isinstance(obs, Tensor) else Tensor(obs)
        dx = dx if isinstance(dx, Tensor) else Tensor(dx)
        h = silu(self.inp(concat([obs, dx], axis=1)))
        for b in self.blocks:
            h = b(h)
        return self.out(h)


class CondBlockFree(Module):
    """Residual Linear -> GroupNorm -> SiLU block."""

    def __init__(self, width, rng, group_size=8):
        self.lin = Linear(width, width, rng)
        self.norm = GroupNorm(width, group_size)

    def forward(self, x):
        return add(silu(self.norm(self.lin(x))), x)
