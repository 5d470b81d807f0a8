"""Small reverse-mode autodiff engine on numpy."""

from .checkpoint import CheckpointError, load_tensors, save_tensors
from .conv import conv1d, conv2d, max_pool1d, max_pool2d
from .gradcheck import finite_difference_check
from .ops import (
    abs,
    add,
    bce,
    concat,
    getitem,
    leaky_relu,
    matmul,
    mean,
    mul,
    neg,
    reshape,
    sigmoid,
    square,
    stack,
    sub,
    sum,
    take,
    tanh,
    transpose,
)
from .optim import Adam, AdamState, adam_update
from .tensor import Tensor, as_tensor, default_dtype, get_default_dtype, inject_gradient_fault, no_grad, tape

__all__ = [
    "Adam", "AdamState", "CheckpointError", "Tensor", "abs", "adam_update", "add", "as_tensor", "bce",
    "concat", "conv1d", "conv2d", "default_dtype", "finite_difference_check", "get_default_dtype",
    "getitem", "inject_gradient_fault", "leaky_relu", "load_tensors", "matmul", "max_pool1d", "max_pool2d", "mean", "mul",
    "neg", "no_grad", "reshape", "save_tensors", "sigmoid", "square", "stack", "sub", "sum", "take",
    "tanh", "tape", "transpose",
]
