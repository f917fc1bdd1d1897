"""Dense network blocks built on the tape: Linear, GroupNorm, FiLM, MLP."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, add, concat, film, group_norm, matmul, mul, silu


@dataclass
class MlpSpec:
    widths: tuple = (256, 256)
    activation: str = "silu"
    residual: bool = False
    group_size: int = 8

    def __post_init__(self):
        if any(w < 1 for w in self.widths):
            raise ValueError("layer widths must be >= 1")


class Module:
    def parameters(self) -> list[Tensor]:
        out = []
        for v in self.__dict__.values():
            if isinstance(v, Tensor) and v.requires_grad:
                out.append(v)
            elif isinstance(v, Module):
                out.extend(v.parameters())
            elif isinstance(v, (list, tuple)):
                for item in v:
                    if isinstance(item, Module):
                        out.extend(item.parameters())
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append(item)
        return out

    def named_parameters(self, prefix="") -> list[tuple[str, Tensor]]:
        out = []
        for name, v in self.__dict__.items():
            key = f"{prefix}{name}"
            if isinstance(v, Tensor) and v.requires_grad:
                out.append((key, v))
            elif isinstance(v, Module):
                out.extend(v.named_parameters(prefix=f"{key}."))
            elif isinstance(v, (list, tuple)):
                for i, item in enumerate(v):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(prefix=f"{key}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{key}.{i}", item))
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, zero_init=False):
        if zero_init:
            w = np.zeros((in_dim, out_dim))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / in_dim), (in_dim, out_dim))
        self.weight = Tensor(w.astype(np.float32), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim, dtype=np.float32), requires_grad=True)

    def forward(self, x):
        return add(matmul(x, self.weight), self.bias)


class GroupNorm(Module):
    def __init__(self, width: int, group_size: int = 8, eps: float = 1e-5):
        if width % group_size != 0:
            raise ValueError(f"group size {group_size} must divide width {width}")
        self.gamma = Tensor(np.ones(width, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(width, dtype=np.float32), requires_grad=True)
        self.group_size = group_size
        self.eps = eps

    def forward(self, x):
        return group_norm(x, self.gamma, self.beta, self.group_size, self.eps)


class FiLM(Module):
    """Conditioning projection producing a per-feature affine modulation.

    The projection is zero-initialized so modulation starts as identity.
    """

    def __init__(self, cond_dim: int, width: int, rng: np.random.Generator):
        self.proj = Linear(cond_dim, 2 * width, rng, zero_init=True)
        self.width = width

    def forward(self, h, cond):
        gb = self.proj(cond)
        from .tensor import narrow

        gamma = narrow(gb, 1, 0, self.width)
        beta = narrow(gb, 1, self.width, self.width)
        return film(h, add(gamma, 1.0), beta)


class MlpBlock(Module):
    """Linear -> GroupNorm -> SiLU, optional FiLM and residual."""

    def __init__(self, in_dim, out_dim, rng, cond_dim=None, residual=False, group_size=8):
        self.lin = Linear(in_dim, out_dim, rng)
        self.norm = GroupNorm(out_dim, group_size)
        self.filmer = FiLM(cond_dim, out_dim, rng) if cond_dim else None
        self.residual = residual and in_dim == out_dim

    def forward(self, x, cond=None):
        h = silu(self.norm(self.lin(x)))
        if self.filmer is not None and cond is not None:
            h = self.filmer(h, cond)
        if self.residual:
            h = add(h, x)
        return h


class Mlp(Module):
    def __init__(self, in_dim, spec: MlpSpec, out_dim, rng, zero_init_out=False):
        self.blocks = []
        d = in_dim
        for w in spec.widths:
            self.blocks.append(
                MlpBlock(d, w, rng, residual=spec.residual, group_size=spec.group_size)
            )
            d = w
        self.out = Linear(d, out_dim, rng, zero_init=zero_init_out)

    def forward(self, x):
        for b in self.blocks:
            x = b(x)
        return self.out(x)
