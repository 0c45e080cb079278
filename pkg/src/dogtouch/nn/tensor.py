"""Dense tensors with reverse-mode automatic differentiation.

Define-by-run tape over numpy arrays: every op records its parents and a
closure that routes the output gradient to them. backward() walks the
tape in reverse topological order and accumulates gradients on leaf
tensors (parameters and inputs). Forward math is plain numpy, so two
evaluations of the same graph are bit-identical.

Training runs in float32; gradient-check suites should build graphs in
float64, where central finite differences are trustworthy.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape construction (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class UsageError(RuntimeError):
    """Autodiff API misuse (non-scalar loss, missing gradients, ...)."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- bookkeeping ----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return not self._parents

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad})"

    # -- graph construction ---------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad."""
        if self.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            node._backward(g, grads)

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_wrap(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return narrow(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if len(axes) > 1 else axes[0])

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


class Parameter(Tensor):
    """A named trainable leaf tensor."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name: str = "", trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        self.name = name
        self.trainable = trainable


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _result(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(grads: dict, node: Tensor, g: np.ndarray):
    if not node.requires_grad:
        return
    key = id(node)
    if key in grads:
        grads[key] = grads[key] + g
    else:
        grads[key] = g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# -- primitive ops ------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    a = _wrap(a, None)
    b = _wrap(b, a.dtype)

    def backward(g, grads):
        _accumulate(grads, a, _unbroadcast(g, a.shape))
        _accumulate(grads, b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    a = _wrap(a, None)
    b = _wrap(b, a.dtype)

    def backward(g, grads):
        _accumulate(grads, a, _unbroadcast(g * b.data, a.shape))
        _accumulate(grads, b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def power(a: Tensor, p: float) -> Tensor:
    def backward(g, grads):
        _accumulate(grads, a, g * p * a.data ** (p - 1))

    return _result(a.data ** p, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    if a.ndim != b.ndim or (a.ndim > 2 and a.shape[:-2] != b.shape[:-2]):
        raise ShapeError(f"matmul batch dims must match exactly: {a.shape} @ {b.shape}")

    def backward(g, grads):
        _accumulate(grads, a, g @ np.swapaxes(b.data, -1, -2))
        _accumulate(grads, b, np.swapaxes(a.data, -1, -2) @ g)

    return _result(a.data @ b.data, (a, b), backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g, grads):
        _accumulate(grads, a, g.reshape(a.shape))

    return _result(a.data.reshape(shape), (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g, grads):
        _accumulate(grads, a, g.transpose(inverse))

    return _result(a.data.transpose(axes), (a,), backward)


def narrow(a: Tensor, key) -> Tensor:
    """Basic slicing with gradient scatter (no repeated indices)."""

    def backward(g, grads):
        buf = np.zeros_like(a.data)
        buf[key] += g
        _accumulate(grads, a, buf)

    return _result(a.data[key], (a,), backward)


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    def backward(g, grads):
        if axis is None:
            _accumulate(grads, a, np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(grads, a, np.broadcast_to(g, a.shape).copy())

    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def reduce_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(reduce_sum(a, axis, keepdims), 1.0 / count)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g, grads):
        _accumulate(grads, a, g * mask)

    return _result(a.data * mask, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g, grads):
        _accumulate(grads, a, g * out_data)

    return _result(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g, grads):
        _accumulate(grads, a, g / a.data)

    return _result(np.log(a.data), (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g, grads):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(grads, a, out_data * (g - inner))

    return _result(out_data, (a,), backward)


# -- fused network ops ----------------------------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, (n, c, oh, ow, kh, kw), (s0, s1, s2 * stride, s3 * stride, s2, s3)
    )
    col = np.ascontiguousarray(view.transpose(0, 2, 3, 1, 4, 5))
    return col.reshape(n * oh * ow, c * kh * kw), oh, ow


def _col2im(dcol: np.ndarray, x_shape, kh: int, kw: int, stride: int, padding: int):
    n, c, h, w = x_shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    dpad = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=dcol.dtype)
    dcol = dcol.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            dpad[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dcol[
                :, :, i, j
            ]
    if padding:
        return dpad[:, :, padding:-padding, padding:-padding]
    return dpad


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution (cross-correlation) over NCHW input."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input and OIHW weight, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    oc, ic, kh, kw = weight.shape
    if ic != c:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(f"kernel {weight.shape} larger than padded input {x.shape}")

    col, oh, ow = _im2col(x.data, kh, kw, stride, padding)
    wmat = weight.data.reshape(oc, -1)
    out = col @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, oh, ow, oc).transpose(0, 3, 1, 2)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g, grads):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, oc)
        if bias is not None:
            _accumulate(grads, bias, gmat.sum(axis=0))
        if weight.requires_grad:
            _accumulate(grads, weight, (gmat.T @ col).reshape(weight.shape))
        if x.requires_grad:
            dcol = gmat @ wmat
            _accumulate(grads, x, _col2im(dcol, x.shape, kh, kw, stride, padding))

    return _result(np.ascontiguousarray(out), parents, backward)


def max_pool2d(x: Tensor, kernel: int = 2) -> Tensor:
    n, c, h, w = x.shape
    if h % kernel or w % kernel:
        raise ShapeError(f"max_pool2d needs dims divisible by {kernel}, got {x.shape}")
    oh, ow = h // kernel, w // kernel
    tiles = x.data.reshape(n, c, oh, kernel, ow, kernel).transpose(0, 1, 2, 4, 3, 5)
    flat = tiles.reshape(n, c, oh, ow, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g, grads):
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, arg[..., None], g[..., None], axis=-1)
        dx = dflat.reshape(n, c, oh, ow, kernel, kernel).transpose(0, 1, 2, 4, 3, 5)
        _accumulate(grads, x, dx.reshape(x.shape))

    return _result(out, (x,), backward)


def normalize(x: Tensor, gamma: Tensor, beta: Tensor, axes, eps: float = 1e-5) -> Tensor:
    """Normalize over `axes` (per remaining dims) with affine scale/shift.

    Covers layer norm (axes = last dim) and the batch-size-independent
    per-channel spatial norm used inside the CNN (axes = (2, 3)).
    """
    axes = (axes,) if isinstance(axes, int) else tuple(axes)
    mean = x.data.mean(axis=axes, keepdims=True)
    centered = x.data - mean
    var = (centered**2).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data
    m = int(np.prod([x.shape[ax] for ax in axes]))

    def backward(g, grads):
        _accumulate(grads, beta, _unbroadcast(g, beta.shape))
        _accumulate(grads, gamma, _unbroadcast(g * xhat, gamma.shape))
        if x.requires_grad:
            dxhat = g * gamma.data
            term1 = dxhat.sum(axis=axes, keepdims=True)
            term2 = (dxhat * xhat).sum(axis=axes, keepdims=True)
            dx = (inv_std / m) * (m * dxhat - term1 - xhat * term2)
            _accumulate(grads, x, dx)

    return _result(out, (x, gamma, beta), backward)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: ids (...,) int -> (..., dim)."""
    ids = np.asarray(ids)
    if ids.min() < 0 or ids.max() >= weight.shape[0]:
        raise ShapeError(f"embedding ids outside [0, {weight.shape[0]})")

    def backward(g, grads):
        dw = np.zeros_like(weight.data)
        np.add.at(dw, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        _accumulate(grads, weight, dw)

    return _result(weight.data[ids], (weight,), backward)


def cross_entropy(logits: Tensor, targets: np.ndarray, ignore_index: int | None = None) -> Tensor:
    """Mean softmax cross-entropy over rows; rows whose target equals
    ignore_index contribute nothing."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects (N, K) logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (logits.shape[0],):
        raise ShapeError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    n, k = logits.shape
    keep = np.ones(n, dtype=bool) if ignore_index is None else targets != ignore_index
    count = max(int(keep.sum()), 1)
    safe_targets = np.where(keep, targets, 0)

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    per_row = (lse - shifted[np.arange(n), safe_targets]) * keep
    loss = per_row.sum() / count

    def backward(g, grads):
        probs = np.exp(shifted - lse[:, None])
        probs[np.arange(n), safe_targets] -= 1.0
        probs *= (keep / count)[:, None] * g
        _accumulate(grads, logits, probs)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g, grads):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            key = [slice(None)] * g.ndim
            key[axis] = slice(lo, hi)
            _accumulate(grads, t, g[tuple(key)])

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)
