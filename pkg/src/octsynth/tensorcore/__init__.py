"""Minimal dense-array engine: autograd ops, Adam, checkpoints, and a small U-Net."""

from .tensor import (
    Tensor,
    as_tensor,
    no_grad,
    is_grad_enabled,
    add,
    sub,
    mul,
    matmul,
    linear,
    conv2d,
    silu,
    avgpool2,
    upsample2_nearest,
    group_norm,
    concat_channels,
    reshape,
    tsum,
    tmean,
    softmax_cross_entropy,
)
from .optim import ParamStore, AdamState, adam_step
from .checkpoint import save_checkpoint, load_checkpoint, CHECKPOINT_VERSION
from .nn import UNet, sinusoidal_time_embedding

__all__ = [
    "Tensor",
    "as_tensor",
    "no_grad",
    "is_grad_enabled",
    "add",
    "sub",
    "mul",
    "matmul",
    "linear",
    "conv2d",
    "silu",
    "avgpool2",
    "upsample2_nearest",
    "group_norm",
    "concat_channels",
    "reshape",
    "tsum",
    "tmean",
    "softmax_cross_entropy",
    "ParamStore",
    "AdamState",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
    "UNet",
    "sinusoidal_time_embedding",
]
