"""Dense float64 tensors with reverse-mode gradients, optimizers, checkpoints."""
from .autodiff import (
    DTYPE,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    bag_mean,
    columns,
    concat,
    log,
    log_sigmoid,
    matmul,
    mean_all,
    mul,
    no_grad,
    parameter,
    relu,
    scale,
    sigmoid,
    softmax_rows,
    sub,
    sum_all,
    take_rows,
    transpose,
    zero_grads,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .init import glorot_uniform, normal_init
from .optim import SGD, Adam, Optimizer, OptimizerError, make_optimizer

__all__ = [
    "DTYPE", "ShapeError", "Tensor", "add", "as_tensor", "backward", "bag_mean",
    "columns", "concat", "log", "log_sigmoid", "matmul", "mean_all", "mul", "no_grad",
    "parameter", "relu", "scale", "sigmoid", "softmax_rows", "sub", "sum_all",
    "take_rows", "transpose", "zero_grads", "load_checkpoint", "save_checkpoint",
    "glorot_uniform", "normal_init", "SGD", "Adam", "Optimizer", "OptimizerError",
    "make_optimizer",
]
