"""Reverse-mode automatic differentiation on float64 numpy arrays.

Define-by-run: every op returns a Tensor holding its value, its parents, and a
closure that routes the incoming gradient to those parents. ``Tensor.backward``
walks the graph once in reverse topological order. All arithmetic is 64-bit;
there is no implicit down-casting anywhere.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

__all__ = [
    "Tensor", "tensor", "add", "sub", "mul", "neg", "scale", "matmul",
    "relu", "sigmoid", "tanh", "exp", "softmax", "reduce_sum", "reduce_mean",
    "mean_pool_time", "reshape", "transpose", "narrow", "concat",
    "conv1d_same", "dropout", "gru_cell", "mse",
]


class Tensor:
    """A node in the computation graph. Data is always a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise DimensionError(f"backward() needs a scalar, got shape {self.data.shape}")
        # Iterative DFS; GRU unrolls make recursive topo-sort brush against the
        # interpreter stack limit.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited or not node.requires_grad:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # Operator sugar kept thin; the module-level functions are the API.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(node: Tensor, grad: np.ndarray) -> None:
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.array(grad, dtype=np.float64)
    else:
        node.grad = node.grad + grad


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _node(data, parents, backward) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires, parents=parents, backward=backward if requires else None)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out_data = a.data + b.data
    except ValueError:
        raise DimensionError(f"add: shapes {a.data.shape} and {b.data.shape} do not broadcast")
    out = _node(out_data, (a, b), None)

    def backward(grad):
        _accumulate(a, _unbroadcast(grad, a.data.shape))
        _accumulate(b, _unbroadcast(grad, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out_data = a.data - b.data
    except ValueError:
        raise DimensionError(f"sub: shapes {a.data.shape} and {b.data.shape} do not broadcast")
    out = _node(out_data, (a, b), None)

    def backward(grad):
        _accumulate(a, _unbroadcast(grad, a.data.shape))
        _accumulate(b, _unbroadcast(-grad, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out_data = a.data * b.data
    except ValueError:
        raise DimensionError(f"mul: shapes {a.data.shape} and {b.data.shape} do not broadcast")
    out = _node(out_data, (a, b), None)

    def backward(grad):
        _accumulate(a, _unbroadcast(grad * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(grad * a.data, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def neg(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = _node(-a.data, (a,), None)

    def backward(grad):
        _accumulate(a, -grad)

    out._backward = backward if out.requires_grad else None
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    a = _as_tensor(a)
    c = float(c)
    out = _node(a.data * c, (a,), None)

    def backward(grad):
        _accumulate(a, grad * c)

    out._backward = backward if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(f"matmul needs ndim >= 2 operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(f"matmul: inner dims differ, {a.data.shape} @ {b.data.shape}")
    out = _node(np.matmul(a.data, b.data), (a, b), None)

    def backward(grad):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        _accumulate(a, _unbroadcast(grad_a, a.data.shape))
        _accumulate(b, _unbroadcast(grad_b, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# nonlinearities

def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = _node(np.maximum(a.data, 0.0), (a,), None)

    def backward(grad):
        _accumulate(a, grad * (a.data > 0.0))

    out._backward = backward if out.requires_grad else None
    return out


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    # Split by sign so neither exp overflows.
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                 np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))
    out = _node(s, (a,), None)

    def backward(grad):
        _accumulate(a, grad * s * (1.0 - s))

    out._backward = backward if out.requires_grad else None
    return out


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    t = np.tanh(a.data)
    out = _node(t, (a,), None)

    def backward(grad):
        _accumulate(a, grad * (1.0 - t * t))

    out._backward = backward if out.requires_grad else None
    return out


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    e = np.exp(a.data)
    out = _node(e, (a,), None)

    def backward(grad):
        _accumulate(a, grad * e)

    out._backward = backward if out.requires_grad else None
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`. Rejects non-finite inputs."""
    a = _as_tensor(a)
    if not np.all(np.isfinite(a.data)):
        raise NumericError("softmax: input contains non-finite values")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=axis, keepdims=True)
    out = _node(s, (a,), None)

    def backward(grad):
        inner = np.sum(grad * s, axis=axis, keepdims=True)
        _accumulate(a, s * (grad - inner))

    out._backward = backward if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# reductions and shape ops

def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _normalize_axes(axis, a.data.ndim)
    out = _node(np.sum(a.data, axis=axes, keepdims=keepdims), (a,), None)

    def backward(grad):
        g = grad
        if not keepdims:
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    out._backward = backward if out.requires_grad else None
    return out


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _normalize_axes(axis, a.data.ndim)
    count = 1
    for ax in axes:
        count *= a.data.shape[ax]
    out = _node(np.mean(a.data, axis=axes, keepdims=keepdims), (a,), None)

    def backward(grad):
        g = grad
        if not keepdims:
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy() / count)

    out._backward = backward if out.requires_grad else None
    return out


def mean_pool_time(a: Tensor) -> Tensor:
    """Mean over the time axis of a (..., T, D) tensor."""
    return reduce_mean(a, axis=-2)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    out = _node(a.data.reshape(shape), (a,), None)

    def backward(grad):
        _accumulate(a, grad.reshape(a.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def transpose(a: Tensor, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    out = _node(np.transpose(a.data, axes), (a,), None)
    inverse = tuple(np.argsort(axes))

    def backward(grad):
        _accumulate(a, np.transpose(grad, inverse))

    out._backward = backward if out.requires_grad else None
    return out


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    a = _as_tensor(a)
    axis = axis % a.data.ndim
    if start < 0 or start + length > a.data.shape[axis]:
        raise DimensionError(
            f"narrow: [{start}, {start + length}) out of bounds for axis {axis} of shape {a.data.shape}")
    index = tuple(slice(None) if ax != axis else slice(start, start + length)
                  for ax in range(a.data.ndim))
    out = _node(a.data[index].copy(), (a,), None)

    def backward(grad):
        full = np.zeros_like(a.data)
        full[index] = grad
        _accumulate(a, full)

    out._backward = backward if out.requires_grad else None
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: empty tensor list")
    axis = axis % tensors[0].data.ndim
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    out = _node(out_data, tuple(tensors), None)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = tuple(slice(None) if ax != axis else slice(lo, hi)
                          for ax in range(grad.ndim))
            _accumulate(t, grad[index])

    out._backward = backward if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# convolution

def conv1d_same(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Length-preserving 1-D cross-correlation.

    x: (B, C_in, T) or (C_in, T); weight: (C_out, C_in, k); bias: (C_out,).
    Same-padding puts floor((k-1)/2) zeros on the left and ceil((k-1)/2) on the
    right, so even kernels lean one step into the future of the padded frame
    but never read real future values beyond the window.
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or weight.data.ndim != 3:
        raise DimensionError(f"conv1d_same: x {x.data.shape}, weight {weight.data.shape}")
    batch, c_in, t_len = xd.shape
    c_out, c_in_w, k = weight.data.shape
    if c_in != c_in_w:
        raise DimensionError(f"conv1d_same: {c_in} input channels vs weight {weight.data.shape}")
    pad_left = (k - 1) // 2
    pad_right = k - 1 - pad_left
    xp = np.pad(xd, ((0, 0), (0, 0), (pad_left, pad_right)))
    out_data = np.zeros((batch, c_out, t_len))
    for j in range(k):
        out_data += np.einsum("bct,oc->bot", xp[:, :, j:j + t_len], weight.data[:, :, j])
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.data.shape != (c_out,):
            raise DimensionError(f"conv1d_same: bias {bias.data.shape} vs {c_out} output channels")
        out_data += bias.data[None, :, None]
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _node(out_data[0] if squeeze else out_data, parents, None)

    def backward(grad):
        g = grad[None] if squeeze else grad
        grad_xp = np.zeros_like(xp)
        grad_w = np.zeros_like(weight.data)
        for j in range(k):
            grad_w[:, :, j] = np.einsum("bot,bct->oc", g, xp[:, :, j:j + t_len])
            grad_xp[:, :, j:j + t_len] += np.einsum("bot,oc->bct", g, weight.data[:, :, j])
        grad_x = grad_xp[:, :, pad_left:pad_left + t_len]
        _accumulate(x, grad_x[0] if squeeze else grad_x)
        _accumulate(weight, grad_w)
        if bias is not None:
            _accumulate(bias, g.sum(axis=(0, 2)))

    out._backward = backward if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# regularization

def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: train-time output has expectation x; eval is identity."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
    x = _as_tensor(x)
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(mask))


# ---------------------------------------------------------------------------
# recurrent cell

def gru_cell(x: Tensor, h: Tensor, params: dict) -> Tensor:
    """One gated-recurrent step.

    z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    cand = tanh(x Wh + (r*h) Uh + bh), h' = (1-z)*h + z*cand.
    With all-zero parameters z = 1/2 and cand = 0, so h' = h/2.
    """
    z = sigmoid(add(add(matmul(x, params["wz"]), matmul(h, params["uz"])), params["bz"]))
    r = sigmoid(add(add(matmul(x, params["wr"]), matmul(h, params["ur"])), params["br"]))
    cand = tanh(add(add(matmul(x, params["wh"]), matmul(mul(r, h), params["uh"])), params["bh"]))
    one_minus_z = add(scale(z, -1.0), Tensor(1.0))
    return add(mul(one_minus_z, h), mul(z, cand))


# ---------------------------------------------------------------------------
# losses

def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise DimensionError(f"mse: prediction {pred.data.shape} vs target {target.data.shape}")
    diff = sub(pred, target)
    return reduce_mean(mul(diff, diff))
