"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tensor` wraps an ndarray and records, per operation, the parent
tensors together with vector-Jacobian closures. ``backward()`` walks the
recorded graph in reverse topological order and accumulates gradients into
``.grad``. Only the operations the model needs are provided; everything is
computed in float64 and is bit-deterministic for fixed inputs.
"""

from __future__ import annotations

import numpy as np


def _as_array(value):
    return np.asarray(value, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad=False, parents=()):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents if self.requires_grad else ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without seed requires a scalar tensor")
            seed = np.ones_like(self.data)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = _as_array(seed) if self.grad is None else self.grad + seed
        for node in reversed(topo):
            grad = node.grad
            for parent, vjp in node._parents:
                if not parent.requires_grad:
                    continue
                contribution = vjp(grad)
                if parent.grad is None:
                    parent.grad = contribution
                else:
                    parent.grad = parent.grad + contribution

    # operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        return mul(self, Tensor(1.0 / other.data) if not other.requires_grad else _reciprocal(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data, parents):
    requires = any(p.requires_grad for p, _ in parents)
    return Tensor(data, requires_grad=requires, parents=tuple(parents))


def _reciprocal(t):
    out_data = 1.0 / t.data
    return _make(out_data, [(t, lambda g, d=out_data: -g * d * d)])


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        [
            (a, lambda g: _unbroadcast(g, a.data.shape)),
            (b, lambda g: _unbroadcast(g, b.data.shape)),
        ],
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        [
            (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
            (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
        ],
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects operands with ndim >= 2")

    def grad_a(g):
        return _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)

    def grad_b(g):
        return _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)

    return _make(np.matmul(a.data, b.data), [(a, grad_a), (b, grad_b)])


def take(t, indices) -> Tensor:
    """Gather rows along axis 0; backward scatter-adds into the source."""
    t = as_tensor(t)
    indices = np.asarray(indices, dtype=np.int64)

    def grad_fn(g):
        buf = np.zeros_like(t.data)
        np.add.at(buf, indices, g)
        return buf

    return _make(t.data[indices], [(t, grad_fn)])


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_grad(i):
        def grad_fn(g):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(index)]

        return grad_fn

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return _make(data, [(t, make_grad(i)) for i, t in enumerate(tensors)])


def relu(t) -> Tensor:
    t = as_tensor(t)
    mask = t.data > 0
    return _make(np.where(mask, t.data, 0.0), [(t, lambda g: g * mask)])


def tanh(t) -> Tensor:
    t = as_tensor(t)
    out_data = np.tanh(t.data)
    return _make(out_data, [(t, lambda g: g * (1.0 - out_data * out_data))])


def _sigmoid_array(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(t) -> Tensor:
    t = as_tensor(t)
    out_data = _sigmoid_array(t.data)
    return _make(out_data, [(t, lambda g: g * out_data * (1.0 - out_data))])


def tensor_sum(t, axis=None, keepdims=False) -> Tensor:
    t = as_tensor(t)

    def grad_fn(g):
        if axis is None:
            return np.broadcast_to(g, t.data.shape).copy()
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, t.data.shape).copy()

    return _make(t.data.sum(axis=axis, keepdims=keepdims), [(t, grad_fn)])


def tensor_mean(t, axis=None, keepdims=False) -> Tensor:
    t = as_tensor(t)
    count = t.data.size if axis is None else t.data.shape[axis]
    return mul(tensor_sum(t, axis=axis, keepdims=keepdims), 1.0 / count)


def reduce_max(t, axis, keepdims=False) -> Tensor:
    """Max along an axis; gradient flows to the first maximal entry."""
    t = as_tensor(t)
    arg = np.argmax(t.data, axis=axis)

    def grad_fn(g):
        buf = np.zeros_like(t.data)
        if not keepdims:
            g = np.expand_dims(g, axis)
        np.put_along_axis(buf, np.expand_dims(arg, axis), g, axis=axis)
        return buf

    return _make(t.data.max(axis=axis, keepdims=keepdims), [(t, grad_fn)])


def broadcast_to(t, shape) -> Tensor:
    t = as_tensor(t)
    return _make(
        np.broadcast_to(t.data, shape),
        [(t, lambda g: _unbroadcast(g, t.data.shape))],
    )


def reshape(t, shape) -> Tensor:
    t = as_tensor(t)
    return _make(t.data.reshape(shape), [(t, lambda g: g.reshape(t.data.shape))])


def masked_softmax(scores, mask) -> Tensor:
    """Softmax over the last axis restricted to ``mask``-true positions.

    Masked-out positions get weight 0; a fully masked row yields all zeros.
    ``mask`` is a constant boolean array, not differentiated through.
    """
    scores = as_tensor(scores)
    mask = np.asarray(mask, dtype=bool)
    masked = np.where(mask, scores.data, -np.inf)
    row_max = masked.max(axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    weights = np.exp(masked - row_max) * mask
    denom = weights.sum(axis=-1, keepdims=True)
    out_data = weights / np.where(denom == 0.0, 1.0, denom)

    def grad_fn(g):
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        return out_data * (g - inner)

    return _make(out_data, [(scores, grad_fn)])


def segment_sum(t, segment_ids, num_segments) -> Tensor:
    """Sum rows of ``t`` into ``num_segments`` buckets given by segment_ids."""
    t = as_tensor(t)
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    out_shape = (num_segments,) + t.data.shape[1:]
    data = np.zeros(out_shape, dtype=np.float64)
    np.add.at(data, segment_ids, t.data)
    return _make(data, [(t, lambda g: g[segment_ids])])


def bce_with_logits(logits, targets) -> Tensor:
    """Elementwise binary cross-entropy on raw scores, numerically stable.

    Computes ``softplus(x) - y*x`` which equals ``-[y log s + (1-y) log(1-s)]``
    for ``s = sigmoid(x)`` without forming the sigmoid in the forward pass.
    """
    logits = as_tensor(logits)
    targets = _as_array(targets)
    data = np.logaddexp(0.0, logits.data) - targets * logits.data

    def grad_fn(g):
        return g * (_sigmoid_array(logits.data) - targets)

    return _make(data, [(logits, grad_fn)])
