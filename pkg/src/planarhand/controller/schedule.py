"""DDPM noise schedule and the forward (noising) process."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class NoiseSchedule:
    """Linear-beta schedule.

    The default beta endpoint is chosen so that with 100 steps the terminal
    signal fraction alpha_bar_n drops below 0.05 while alpha_bar_1 stays
    above 0.99 (the usual 1000-step endpoints leave far too much signal at
    100 steps).
    """

    steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.06

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError("schedule needs at least 2 steps")
        t = np.arange(self.steps, dtype=np.float64)
        self.betas = self.beta_start + (self.beta_end - self.beta_start) * t / (self.steps - 1)
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)
        # DDPM posterior variance beta~_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t
        prev = np.concatenate([[1.0], self.alpha_bars[:-1]])
        self.sigma2 = (1.0 - prev) / (1.0 - self.alpha_bars) * self.betas

    def alpha_bar(self, t: int) -> float:
        """alpha_bar at 1-based step t; t=0 means the clean sample."""
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])

    def posterior_var(self, t: int) -> float:
        return float(self.sigma2[t - 1])

    def to_json(self) -> dict:
        return {
            "steps": self.steps,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NoiseSchedule":
        return cls(
            steps=int(doc["steps"]),
            beta_start=float(doc["beta_start"]),
            beta_end=float(doc["beta_end"]),
        )


def diffuse_forward(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, 1-based t."""
    if not 1 <= t <= schedule.steps:
        raise ValueError(f"t={t} outside [1, {schedule.steps}]")
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError("noise must match the sample shape")
    ab = schedule.alpha_bar(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def ddim_step_indices(schedule: NoiseSchedule, steps: int) -> list:
    """Descending 1-based timestep ladder for DDIM, ending at 1."""
    idx = np.linspace(schedule.steps, 1, steps)
    out = sorted({int(round(v)) for v in idx}, reverse=True)
    return out
