from .tensor import Tensor, add, concat, film, group_norm, matmul, mean, mul, narrow, no_grad, silu, square, sub, sum_
from .nn import FiLM, GroupNorm, Linear, Mlp, MlpBlock, MlpSpec, Module
from .optim import AdamW, AdamWHyper, adamw_step
from .gradcheck import grad_check, module_grad_check
from .serialize import WeightsFormatError, load_module, load_weights, save_module, save_weights

__all__ = [
    "Tensor", "add", "concat", "film", "group_norm", "matmul", "mean", "mul",
    "narrow", "no_grad", "silu", "square", "sub", "sum_",
    "FiLM", "GroupNorm", "Linear", "Mlp", "MlpBlock", "MlpSpec", "Module",
    "AdamW", "AdamWHyper", "adamw_step",
    "grad_check", "module_grad_check",
    "WeightsFormatError", "load_module", "load_weights", "save_module", "save_weights",
]
