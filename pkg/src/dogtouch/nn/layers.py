"""Layer inventory for the classifier and translator models."""
from __future__ import annotations

import math

import numpy as np

from .tensor import (
    Parameter,
    ShapeError,
    Tensor,
    conv2d,
    embedding,
    matmul,
    max_pool2d,
    normalize,
    relu,
    reshape,
    softmax,
    transpose,
)


class Module:
    """Minimal container: parameter discovery by attribute walk."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for name, value in self._children():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(full)

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ShapeError(f"state dict mismatch: missing {missing}, unexpected {extra}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=p.dtype)
            if value.shape != p.shape:
                raise ShapeError(f"parameter {name}: shape {value.shape} != {p.shape}")
            p.data = value.copy()


def _kaiming_uniform(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng, bias: bool = True,
                 dtype=np.float32):
        self.weight = Parameter(_kaiming_uniform(rng, (in_features, out_features), in_features, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        flat = reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
        out = matmul(flat, self.weight)
        if self.bias is not None:
            out = out + self.bias
        if x.ndim != 2:
            out = reshape(out, lead + (self.weight.shape[1],))
        return out


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng,
                 stride: int = 1, padding: int = 0, bias: bool = True, dtype=np.float32):
        fan_in = in_channels * kernel * kernel
        self.weight = Parameter(
            _kaiming_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in, dtype)
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype)) if bias else None
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ChannelNorm(Module):
    """Per-sample, per-channel normalization over spatial dims.

    Batch-size independent, unlike classic batch statistics; desk-scale
    batches are small enough that this matters.
    """

    def __init__(self, channels: int, eps: float = 1e-5, dtype=np.float32):
        self.gamma = Parameter(np.ones((1, channels, 1, 1), dtype=dtype))
        self.beta = Parameter(np.zeros((1, channels, 1, 1), dtype=dtype))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return normalize(x, self.gamma, self.beta, axes=(2, 3), eps=self.eps)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        self.gamma = Parameter(np.ones(dim, dtype=dtype))
        self.beta = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return normalize(x, self.gamma, self.beta, axes=-1 if x.ndim == 1 else x.ndim - 1,
                         eps=self.eps)


class Embedding(Module):
    def __init__(self, vocab_size: int, dim: int, rng, dtype=np.float32):
        self.weight = Parameter(
            rng.normal(0.0, dim**-0.5, size=(vocab_size, dim)).astype(dtype)
        )

    def forward(self, ids: np.ndarray) -> Tensor:
        return embedding(self.weight, ids)


class MaxPool2d(Module):
    def __init__(self, kernel: int = 2):
        self.kernel = kernel

    def forward(self, x: Tensor) -> Tensor:
        return max_pool2d(x, self.kernel)


class ResidualBlock(Module):
    """Two 3x3 convs with a skip connection; 1x1 projection when shapes change."""

    def __init__(self, in_channels: int, out_channels: int, rng, stride: int = 1,
                 dtype=np.float32):
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng, stride=stride, padding=1,
                            bias=False, dtype=dtype)
        self.norm1 = ChannelNorm(out_channels, dtype=dtype)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng, stride=1, padding=1,
                            bias=False, dtype=dtype)
        self.norm2 = ChannelNorm(out_channels, dtype=dtype)
        if stride != 1 or in_channels != out_channels:
            self.proj = Conv2d(in_channels, out_channels, 1, rng, stride=stride,
                               bias=False, dtype=dtype)
            self.proj_norm = ChannelNorm(out_channels, dtype=dtype)
        else:
            self.proj = None

    def forward(self, x: Tensor) -> Tensor:
        out = relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        shortcut = x if self.proj is None else self.proj_norm(self.proj(x))
        if out.shape != shortcut.shape:
            raise ShapeError(f"residual shapes diverged: {out.shape} vs {shortcut.shape}")
        return relu(out + shortcut)


class MultiHeadAttention(Module):
    """Scaled dot-product attention over head_count parallel subspaces."""

    def __init__(self, model_dim: int, head_count: int, rng, dtype=np.float32):
        if model_dim % head_count:
            raise ShapeError(f"model_dim {model_dim} not divisible by {head_count} heads")
        self.model_dim = model_dim
        self.head_count = head_count
        self.head_dim = model_dim // head_count
        self.wq = Linear(model_dim, model_dim, rng, dtype=dtype)
        self.wk = Linear(model_dim, model_dim, rng, dtype=dtype)
        self.wv = Linear(model_dim, model_dim, rng, dtype=dtype)
        self.wo = Linear(model_dim, model_dim, rng, dtype=dtype)

    def _split(self, x: Tensor) -> Tensor:
        n, length, _ = x.shape
        return transpose(reshape(x, (n, length, self.head_count, self.head_dim)), (0, 2, 1, 3))

    def forward(self, query: Tensor, key: Tensor, value: Tensor,
                mask: np.ndarray | None = None) -> Tensor:
        n, lq, _ = query.shape
        q = self._split(self.wq(query))
        k = self._split(self.wk(key))
        v = self._split(self.wv(value))
        scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (self.head_dim**-0.5)
        if mask is not None:
            # additive mask, broadcast over (n, heads, lq, lk); masked = large negative
            scores = scores + Tensor(mask.astype(scores.dtype))
        attn = softmax(scores, axis=-1)
        out = matmul(attn, v)
        out = reshape(transpose(out, (0, 2, 1, 3)), (n, lq, self.model_dim))
        return self.wo(out)


def causal_mask(length: int, dtype=np.float32) -> np.ndarray:
    """(1, 1, L, L) additive mask hiding positions after the query index."""
    mask = np.triu(np.full((length, length), -1e9, dtype=dtype), k=1)
    return mask[None, None, :, :]


def padding_mask(ids: np.ndarray, pad_id: int, dtype=np.float32) -> np.ndarray:
    """(N, 1, 1, L) additive mask hiding PAD key positions."""
    mask = np.where(ids == pad_id, -1e9, 0.0).astype(dtype)
    return mask[:, None, None, :]
