"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class AdamWHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


def adamw_step(params, grads, state, hyper: AdamWHyper, t: int):
    """One AdamW update, in place on the parameter arrays.

    `params` and `grads` are parallel lists of numpy arrays; `state` is a
    dict carrying first/second moments, created on first use. t is 1-based.
    """
    if t < 1:
        raise ValueError("AdamW step count t must be >= 1")
    if "m" not in state:
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
    b1, b2 = hyper.beta1, hyper.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        g = np.zeros_like(p) if g is None else g
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p -= hyper.lr * (mhat / (np.sqrt(vhat) + hyper.eps) + hyper.weight_decay * p)
    return params


class AdamW:
    """Stateful wrapper bound to a module's parameter tensors."""

    def __init__(self, params: list[Tensor], hyper: AdamWHyper | None = None):
        self.params = params
        self.hyper = hyper or AdamWHyper()
        self.state: dict = {}
        self.t = 0

    def step(self):
        self.t += 1
        adamw_step(
            [p.data for p in self.params],
            [p.grad for p in self.params],
            self.state,
            self.hyper,
            self.t,
        )

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
