from .layers import (
    AsppParams,
    AttentionGateParams,
    aspp,
    attention_gate,
    conv2d,
    dropout,
    max_pool2,
    transposed_conv2d,
)
from .tensor import (
    Tensor,
    backward,
    clamp,
    concat,
    grad_enabled,
    log,
    mean,
    no_grad,
    relu,
    sigmoid,
)
from .unet import ParamStore, UNet, UNetConfig, build_unet

__all__ = [
    "AsppParams",
    "AttentionGateParams",
    "ParamStore",
    "Tensor",
    "UNet",
    "UNetConfig",
    "aspp",
    "attention_gate",
    "backward",
    "build_unet",
    "clamp",
    "concat",
    "conv2d",
    "dropout",
    "grad_enabled",
    "log",
    "max_pool2",
    "mean",
    "no_grad",
    "relu",
    "sigmoid",
    "transposed_conv2d",
]
