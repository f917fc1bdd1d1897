"""Finite-difference verification of the autodiff tape.

Checks run in float64: float32 central differences at usable step sizes
drown in rounding noise well above the tolerances we care about.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad_check(f, x: np.ndarray, h: float = 1e-3) -> float:
    """Max relative error between tape gradient and central differences.

    f maps a Tensor to a scalar Tensor. The input is promoted to float64
    for both passes.
    """
    x64 = np.asarray(x, dtype=np.float64)
    t = Tensor(x64.copy(), requires_grad=True, dtype=np.float64)
    out = f(t)
    out.backward()
    g_ad = t.grad.copy()

    g_fd = np.zeros_like(x64)
    flat = x64.reshape(-1)
    fd_flat = g_fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(Tensor(x64.copy(), dtype=np.float64)).item()
        flat[i] = orig - h
        lo = f(Tensor(x64.copy(), dtype=np.float64)).item()
        flat[i] = orig
        fd_flat[i] = (hi - lo) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), 1.0)
    return float(np.max(np.abs(g_ad - g_fd) / denom))


def module_grad_check(module, x: np.ndarray, loss_fn, h: float = 1e-3) -> float:
    """grad_check over a module's parameters (input held fixed).

    Parameters are promoted to float64 in place for the duration of the
    check and restored afterwards.
    """
    params = module.parameters()
    saved = [p.data for p in params]
    try:
        for p in params:
            p.data = p.data.astype(np.float64)
        xt = Tensor(np.asarray(x, dtype=np.float64), dtype=np.float64)
        module.zero_grad()
        loss = loss_fn(module, xt)
        loss.backward()
        worst = 0.0
        for p in params:
            g_ad = p.grad if p.grad is not None else np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            g_fd = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                hi = loss_fn(module, xt).item()
                flat[i] = orig - h
                lo = loss_fn(module, xt).item()
                flat[i] = orig
                g_fd[i] = (hi - lo) / (2.0 * h)
            g_fd = g_fd.reshape(p.data.shape)
            denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), 1.0)
            worst = max(worst, float(np.max(np.abs(g_ad - g_fd) / denom)))
        return worst
    finally:
        for p, s in zip(params, saved):
            p.data = s
