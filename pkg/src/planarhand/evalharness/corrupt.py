"""Suboptimal-policy constructions: additive uniform noise and slowdown."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CorruptionSpec:
    kind: str = "noisy"    # noisy | slow
    scale: float = 0.5     # noise half-width, or slowdown cap
    clip: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("noisy", "slow"):
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("corruption scale must be >= 0")


class CorruptedPolicy:
    """Wraps a policy emitting normalized actions in [-1, 1].

    noisy: a + U(-scale, scale), clipped to [-1, 1]
    slow:  U(0, scale) * a, drawn per tick
    """

    def __init__(self, inner, spec: CorruptionSpec, rng):
        self.inner = inner
        self.spec = spec
        self.rng = rng

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def act_normalized(self, world, history, obs, base_action):
        a = np.asarray(base_action, dtype=np.float64)
        s = self.spec
        if s.scale == 0.0:
            return np.clip(a, *s.clip)
        if s.kind == "noisy":
            a = a + self.rng.uniform(-s.scale, s.scale, a.shape)
        else:
            a = float(self.rng.uniform(0.0, s.scale)) * a
        return np.clip(a, *s.clip)
