"""Minimal float64 tensor arithmetic with reverse-mode gradients."""

from .core import (
    RecordEntry,
    Tensor,
    allocated_floats,
    as_tensor,
    backward,
    computation_record,
    make_result,
    no_grad,
    reset_allocated_floats,
    unbroadcast,
)
from .fft import causal_conv, circular_conv, fft_length, fft_real, ifft_real
from .gradcheck import gradcheck, numeric_grad
from .ops import (
    ELEMENTWISE_TAGS,
    add,
    concat,
    div,
    dropout,
    elementwise,
    exp,
    getitem,
    layer_norm,
    log,
    matmul,
    mean,
    mul,
    neg,
    reshape,
    sigmoid,
    silu,
    softplus,
    stack,
    sub,
    sum,
    swapaxes,
    tanh,
    transpose,
)

__all__ = [
    "ELEMENTWISE_TAGS", "RecordEntry", "Tensor", "add", "allocated_floats", "as_tensor",
    "backward", "causal_conv", "circular_conv", "computation_record", "concat", "div",
    "dropout", "elementwise", "exp", "fft_length", "fft_real", "getitem", "gradcheck",
    "ifft_real", "layer_norm", "log", "make_result", "matmul", "mean", "mul", "neg",
    "no_grad", "numeric_grad", "reset_allocated_floats", "reshape", "sigmoid", "silu",
    "softplus", "stack", "sub", "sum", "swapaxes", "tanh", "transpose", "unbroadcast",
]
