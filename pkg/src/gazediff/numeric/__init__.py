from .tensor import (
    NumericError,
    ShapeError,
    Tape,
    Tensor,
    add,
    bias_add,
    channel_add,
    concat,
    conv1d,
    conv1d_transpose,
    gather,
    layernorm,
    matmul,
    mul,
    neg,
    reshape,
    scale,
    silu,
    softmax,
    sub,
    tmean,
    transpose,
    tsum,
)
from .gradcheck import grad_check, grad_check_params
from .optim import Adam
from .checkpoint import CheckpointError, load_tensors, save_tensors

__all__ = [
    "Adam",
    "CheckpointError",
    "NumericError",
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "bias_add",
    "channel_add",
    "concat",
    "conv1d",
    "conv1d_transpose",
    "gather",
    "grad_check",
    "grad_check_params",
    "layernorm",
    "load_tensors",
    "matmul",
    "mul",
    "neg",
    "reshape",
    "save_tensors",
    "scale",
    "silu",
    "softmax",
    "sub",
    "tmean",
    "transpose",
    "tsum",
]
