"""Minimal reverse-mode autodiff over float64 numpy arrays."""

from .gradcheck import GradCheckResult, check_gradients, numeric_grad, relative_error
from .ops import (
    LOG_CLAMP,
    activation,
    add,
    add_bias,
    detach,
    ewise,
    gather_rows,
    linear,
    log,
    matmul,
    mul,
    reduce,
    reduce_mean,
    reduce_sum,
    relu,
    repeat_rows,
    reshape,
    scale,
    select,
    shift,
    sigmoid,
    softmax,
    stack,
    sub,
    tanh,
    tile,
    transpose,
)
from .tensor import ComputationTape, DimensionError, Node, Tensor, backward
from .textio import (
    TensorFormatError,
    format_tensor,
    load_tensor,
    load_tensors,
    parse_tensor,
    parse_tensors,
    save_tensor,
    save_tensors,
)

__all__ = [name for name in dir() if not name.startswith("_")]
