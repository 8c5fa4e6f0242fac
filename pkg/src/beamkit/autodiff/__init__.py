"""Reverse-mode tensor engine, layers, and checkpoint container."""

from .checkpoint import CHECKPOINT_VERSION, load_checkpoint, save_checkpoint
from .gradcheck import finite_difference_check
from .layers import (
    LSTM,
    AxisNorm,
    Conv2d,
    ConvTranspose2d,
    Initializer,
    Linear,
    Module,
    ModuleList,
    Parameter,
    PReLU,
    glu,
    instance_norm_axes,
    lstm_step,
)
from .tensor import (
    Tensor,
    astensor,
    concat,
    conv2d,
    deconv2d,
    finite_checks,
    get_default_dtype,
    is_grad_enabled,
    magnitude,
    matmul,
    no_grad,
    prelu,
    relu,
    set_default_dtype,
    sigmoid,
    tanh,
)

__all__ = [
    "Tensor",
    "astensor",
    "no_grad",
    "finite_checks",
    "is_grad_enabled",
    "set_default_dtype",
    "get_default_dtype",
    "concat",
    "matmul",
    "conv2d",
    "deconv2d",
    "relu",
    "prelu",
    "sigmoid",
    "tanh",
    "magnitude",
    "Parameter",
    "Initializer",
    "Module",
    "ModuleList",
    "Conv2d",
    "ConvTranspose2d",
    "Linear",
    "PReLU",
    "AxisNorm",
    "LSTM",
    "lstm_step",
    "glu",
    "instance_norm_axes",
    "finite_difference_check",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]
