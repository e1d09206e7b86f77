"""Minimal float64 tensor autodiff, layers, and optimization."""

from .optim import Adam, clip_global_norm
from .params import (
    ParameterSet,
    embedding_init,
    load_checkpoint,
    ones_init,
    save_checkpoint,
    xavier_uniform,
    zeros_init,
)
from .tensor import (
    Tensor,
    add,
    add_scalar,
    concat,
    embedding_lookup,
    gather_rows,
    gelu,
    layer_norm,
    matmul,
    max_,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    scale,
    slice_axis,
    softmax,
    square,
    sub,
    sum_,
    tanh,
    transpose,
)

__all__ = [
    "Adam",
    "ParameterSet",
    "Tensor",
    "add",
    "add_scalar",
    "clip_global_norm",
    "concat",
    "embedding_init",
    "embedding_lookup",
    "gather_rows",
    "gelu",
    "layer_norm",
    "load_checkpoint",
    "matmul",
    "max_",
    "mean",
    "mul",
    "no_grad",
    "ones_init",
    "relu",
    "reshape",
    "save_checkpoint",
    "scale",
    "slice_axis",
    "softmax",
    "square",
    "sub",
    "sum_",
    "tanh",
    "transpose",
    "xavier_uniform",
    "zeros_init",
]
