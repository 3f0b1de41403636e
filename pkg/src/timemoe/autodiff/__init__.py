from .tensor import (
    ShapeError,
    Tape,
    Tensor,
    add,
    backward,
    concatenate,
    conv1d,
    cross_entropy,
    div,
    dropout,
    embedding,
    exp,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    narrow,
    neg,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax,
    sub,
    sum as sum_,
    take_along_axis,
    tanh,
    transpose,
)
from . import nn, optim

__all__ = [
    "ShapeError", "Tape", "Tensor", "add", "backward", "concatenate", "conv1d",
    "cross_entropy", "div", "dropout", "embedding", "exp", "layer_norm", "log",
    "log_softmax", "matmul", "mean", "mul", "narrow", "neg", "no_grad", "relu",
    "reshape", "sigmoid", "softmax", "sub", "sum_", "take_along_axis", "tanh",
    "transpose", "nn", "optim",
]
