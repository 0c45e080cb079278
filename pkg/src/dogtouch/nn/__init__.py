"""Minimal dense tensor library with reverse-mode autodiff."""
from .tensor import (
    Parameter,
    ShapeError,
    Tensor,
    UsageError,
    concat,
    conv2d,
    cross_entropy,
    embedding,
    matmul,
    max_pool2d,
    no_grad,
    normalize,
    relu,
    softmax,
)
from .layers import (
    ChannelNorm,
    Conv2d,
    Embedding,
    LayerNorm,
    Linear,
    MaxPool2d,
    Module,
    MultiHeadAttention,
    ResidualBlock,
    causal_mask,
    padding_mask,
)
from .optim import Adam
from .checkpoint import (
    CheckpointError,
    load_checkpoint,
    load_model,
    save_checkpoint,
    save_model,
)

__all__ = [
    "Adam", "ChannelNorm", "CheckpointError", "Conv2d", "Embedding", "LayerNorm",
    "Linear", "MaxPool2d", "Module", "MultiHeadAttention", "Parameter",
    "ResidualBlock", "ShapeError", "Tensor", "UsageError", "causal_mask", "concat",
    "conv2d", "cross_entropy", "embedding", "load_checkpoint", "load_model",
    "matmul", "max_pool2d", "no_grad", "normalize", "padding_mask", "relu",
    "save_checkpoint", "save_model", "softmax",
]
