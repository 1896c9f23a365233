"""Reverse-mode autodiff core: tensors, tape, ops, Adam, checkpointing."""

from .adam import AdamState, adam_step
from .checkpoint import load_archive, save_archive
from .gradcheck import GradcheckFailure, gradcheck
from .ops import (
    DIFFERENTIABLE_OPS,
    absval,
    add,
    add_scalar,
    clip,
    concat,
    conv1d,
    conv2d,
    cross_entropy,
    log,
    matmul,
    max_pool1d,
    max_pool2d,
    mean_pool,
    mul,
    mul_scalar,
    neg,
    pad_rows,
    relu,
    reshape,
    segment_mean,
    sigmoid,
    sinc_kernel,
    slice_rows,
    softmax,
    squared_euclidean,
    sub,
    sum_all,
    tanh,
    transpose,
)
from .tensor import Tape, Tensor, as_tensor, backward, checked_mode, parameter, set_checked

__all__ = [
    "AdamState", "adam_step", "save_archive", "load_archive",
    "GradcheckFailure", "gradcheck",
    "DIFFERENTIABLE_OPS",
    "Tape", "Tensor", "as_tensor", "backward", "checked_mode", "parameter", "set_checked",
    "absval", "add", "add_scalar", "clip", "concat", "conv1d", "conv2d",
    "cross_entropy", "log", "matmul", "max_pool1d", "max_pool2d", "mean_pool",
    "mul", "mul_scalar", "neg", "pad_rows", "relu", "reshape", "segment_mean",
    "sigmoid", "sinc_kernel", "slice_rows", "softmax", "squared_euclidean",
    "sub", "sum_all", "tanh", "transpose",
]
