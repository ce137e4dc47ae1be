"""Minimal dense-tensor core with taped reverse-mode gradients."""

from .checkpoint import load_params, save_params
from .ops import (add, concat, conv3d, gather_rows, linear, matmul, mean_rows,
                  mse, mul, permute, reshape, scale, silu, softmax,
                  softmax_cross_entropy, transpose)
from .optim import SGD, AdamW
from .tensor import GradTape, Tensor, arena_bytes, arena_reset, as_tensor

__all__ = [
    "Tensor", "GradTape", "as_tensor", "arena_bytes", "arena_reset",
    "add", "scale", "mul", "matmul", "linear", "reshape", "permute",
    "transpose", "concat", "gather_rows", "mean_rows", "silu", "softmax",
    "softmax_cross_entropy", "mse", "conv3d",
    "SGD", "AdamW", "save_params", "load_params",
]
