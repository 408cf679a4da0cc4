"""Dense float64 tensors with reverse-mode automatic differentiation.

Every activation, parameter, and score in the model is a `Tensor`: a numpy
array plus a record of the operation that produced it. `Tensor.backward()`
walks the recorded graph in reverse topological order and accumulates
gradients into every participating tensor that requested them.

Everything is 64-bit. Finite-difference gradient checks are the backbone of
the test suite, and they are only trustworthy at full precision.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


# Graph recording can be suspended for pure inference (prediction, BFS
# feature reads); suspended ops return plain constant tensors.
_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    """A dense float64 array that can participate in backpropagation.

    `grad` is populated (and accumulated across repeated backward passes)
    for every tensor with `requires_grad` that the loss depends on.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """A named trainable tensor; the name keys checkpoint storage."""

    __slots__ = ("name",)

    def __init__(self, name, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def constant(data):
    return data if isinstance(data, Tensor) else Tensor(data)


def _needs_graph(*tensors):
    return _GRAD_ENABLED and any(t.requires_grad for t in tensors)


def _result(data, parents, backward_fn):
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


def _accumulate(grads, parent, delta):
    if not parent.requires_grad:
        return
    key = id(parent)
    existing = grads.get(key)
    grads[key] = delta if existing is None else existing + delta


# -- broadcasting -------------------------------------------------------
#
# Binary elementwise ops accept: equal shapes, a scalar on either side, or
# a 1-D vector whose length matches the other operand's last axis (the
# bias / NA-column cases). Anything wider is rejected.


def _check_broadcast(a, b):
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    if a.size == 1 or b.size == 1:
        return
    if len(sa) == 1 and len(sb) >= 1 and sa[0] == sb[-1]:
        return
    if len(sb) == 1 and len(sa) >= 1 and sb[0] == sa[-1]:
        return
    raise ShapeError(f"incompatible shapes {sa} and {sb}")


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# -- elementwise binary ops ---------------------------------------------


def add(a, b):
    a, b = constant(a), constant(b)
    _check_broadcast(a, b)

    def backward_fn(g, grads):
        _accumulate(grads, a, _unbroadcast(g, a.shape))
        _accumulate(grads, b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward_fn)


def sub(a, b):
    a, b = constant(a), constant(b)
    _check_broadcast(a, b)

    def backward_fn(g, grads):
        _accumulate(grads, a, _unbroadcast(g, a.shape))
        _accumulate(grads, b, _unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward_fn)


def mul(a, b):
    a, b = constant(a), constant(b)
    _check_broadcast(a, b)

    def backward_fn(g, grads):
        _accumulate(grads, a, _unbroadcast(g * b.data, a.shape))
        _accumulate(grads, b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward_fn)


def div(a, b):
    a, b = constant(a), constant(b)
    _check_broadcast(a, b)

    def backward_fn(g, grads):
        _accumulate(grads, a, _unbroadcast(g / b.data, a.shape))
        _accumulate(grads, b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(a.data / b.data, (a, b), backward_fn)


def neg(a):
    a = constant(a)

    def backward_fn(g, grads):
        _accumulate(grads, a, -g)

    return _result(-a.data, (a,), backward_fn)


# -- elementwise unary ops ----------------------------------------------


def sigmoid(a):
    a = constant(a)
    # Stable in both tails: exp of a non-positive argument only.
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward_fn(g, grads):
        _accumulate(grads, a, g * out * (1.0 - out))

    return _result(out, (a,), backward_fn)


def tanh(a):
    a = constant(a)
    out = np.tanh(a.data)

    def backward_fn(g, grads):
        _accumulate(grads, a, g * (1.0 - out * out))

    return _result(out, (a,), backward_fn)


def relu(a):
    a = constant(a)

    def backward_fn(g, grads):
        _accumulate(grads, a, g * (a.data > 0))

    return _result(np.maximum(a.data, 0.0), (a,), backward_fn)


# The hinge loss names its clamp explicitly; same op as relu.
max_with_zero = relu


def leaky_relu(a, slope=0.01):
    a = constant(a)

    def backward_fn(g, grads):
        _accumulate(grads, a, g * np.where(a.data > 0, 1.0, slope))

    return _result(np.where(a.data > 0, a.data, slope * a.data), (a,), backward_fn)


def sqrt(a):
    a = constant(a)
    out = np.sqrt(a.data)

    def backward_fn(g, grads):
        _accumulate(grads, a, g / (2.0 * out))

    return _result(out, (a,), backward_fn)


def exp(a):
    a = constant(a)
    out = np.exp(a.data)

    def backward_fn(g, grads):
        _accumulate(grads, a, g * out)

    return _result(out, (a,), backward_fn)


def log(a):
    a = constant(a)

    def backward_fn(g, grads):
        _accumulate(grads, a, g / a.data)

    return _result(np.log(a.data), (a,), backward_fn)


# -- linear algebra ------------------------------------------------------


def matmul(a, b):
    a, b = constant(a), constant(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")

    def backward_fn(g, grads):
        _accumulate(grads, a, g @ b.data.T)
        _accumulate(grads, b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backward_fn)


def transpose(a):
    a = constant(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got {a.shape}")

    def backward_fn(g, grads):
        _accumulate(grads, a, g.T)

    return _result(a.data.T, (a,), backward_fn)


def reshape(a, shape):
    a = constant(a)
    original = a.shape

    def backward_fn(g, grads):
        _accumulate(grads, a, g.reshape(original))

    return _result(a.data.reshape(shape), (a,), backward_fn)


def diag(v):
    """Vector -> diagonal matrix."""
    v = constant(v)
    if v.data.ndim != 1:
        raise ShapeError(f"diag needs a 1-D tensor, got {v.shape}")

    def backward_fn(g, grads):
        _accumulate(grads, v, np.diagonal(g).copy())

    return _result(np.diag(v.data), (v,), backward_fn)


# -- reductions ----------------------------------------------------------


def _check_axis(a, axis):
    if axis is not None and not (-a.data.ndim <= axis < a.data.ndim):
        raise ShapeError(f"axis {axis} invalid for shape {a.shape}")
    if a.data.size == 0:
        raise ShapeError("reduction over an empty tensor")


def tensor_sum(a, axis=None):
    a = constant(a)
    _check_axis(a, axis)

    def backward_fn(g, grads):
        if axis is None:
            _accumulate(grads, a, np.broadcast_to(g, a.shape).copy())
        else:
            _accumulate(grads, a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

    return _result(a.data.sum(axis=axis), (a,), backward_fn)


def mean(a, axis=None):
    a = constant(a)
    _check_axis(a, axis)
    n = a.data.size if axis is None else a.shape[axis]

    def backward_fn(g, grads):
        if axis is None:
            _accumulate(grads, a, np.broadcast_to(g / n, a.shape).copy())
        else:
            _accumulate(grads, a, np.broadcast_to(np.expand_dims(g, axis) / n, a.shape).copy())

    return _result(a.data.mean(axis=axis), (a,), backward_fn)


def tensor_max(a, axis=None):
    a = constant(a)
    _check_axis(a, axis)
    out = a.data.max(axis=axis)

    def backward_fn(g, grads):
        if axis is None:
            mask = (a.data == out).astype(np.float64)
            _accumulate(grads, a, mask * (g / mask.sum()))
        else:
            expanded = np.expand_dims(out, axis)
            mask = (a.data == expanded).astype(np.float64)
            mask /= mask.sum(axis=axis, keepdims=True)
            _accumulate(grads, a, mask * np.expand_dims(g, axis))

    return _result(out, (a,), backward_fn)


def logsumexp(a, axis=None):
    """Max-shifted smooth maximum; safe for large magnitudes."""
    a = constant(a)
    _check_axis(a, axis)
    if axis is None:
        shift = a.data.max()
        out = shift + np.log(np.exp(a.data - shift).sum())
        soft = np.exp(a.data - out)
    else:
        shift = a.data.max(axis=axis, keepdims=True)
        out = (shift + np.log(np.exp(a.data - shift).sum(axis=axis, keepdims=True))).squeeze(axis)
        soft = np.exp(a.data - np.expand_dims(out, axis))

    def backward_fn(g, grads):
        if axis is None:
            _accumulate(grads, a, g * soft)
        else:
            _accumulate(grads, a, np.expand_dims(g, axis) * soft)

    return _result(out, (a,), backward_fn)


def softmax(a, axis=-1):
    a = constant(a)
    _check_axis(a, axis)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g, grads):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accumulate(grads, a, out * (g - inner))

    return _result(out, (a,), backward_fn)


# -- structural ops ------------------------------------------------------


def concat(tensors, axis=0):
    tensors = [constant(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g, grads):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            _accumulate(grads, t, g[tuple(index)])

    return _result(np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), backward_fn)


def stack(tensors, axis=0):
    tensors = [constant(t) for t in tensors]
    if not tensors:
        raise ShapeError("stack of an empty list")

    def backward_fn(g, grads):
        for i, t in enumerate(tensors):
            _accumulate(grads, t, np.take(g, i, axis=axis))

    return _result(np.stack([t.data for t in tensors], axis=axis),
                   tuple(tensors), backward_fn)


def take(a, key):
    """Basic and integer indexing with scatter-add backward."""
    a = constant(a)
    out = a.data[key]

    def backward_fn(g, grads):
        if not a.requires_grad:
            return
        buf = np.zeros_like(a.data)
        np.add.at(buf, key, g)
        _accumulate(grads, a, buf)

    return _result(out, (a,), backward_fn)


def gather(a, rows):
    """Select rows along axis 0; duplicate rows sum their gradients."""
    a = constant(a)
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size and (rows.min() < -a.shape[0] or rows.max() >= a.shape[0]):
        raise ShapeError(f"gather rows out of range for shape {a.shape}")

    def backward_fn(g, grads):
        buf = np.zeros_like(a.data)
        np.add.at(buf, rows, g)
        _accumulate(grads, a, buf)

    return _result(a.data[rows], (a,), backward_fn)


def zero_pad_to(a, length):
    """Pad a 1-D tensor with zeros up to `length`; pads get zero gradient."""
    a = constant(a)
    if a.data.ndim != 1:
        raise ShapeError(f"zero_pad_to needs a 1-D tensor, got {a.shape}")
    n = a.shape[0]
    if length < n:
        raise ShapeError(f"zero_pad_to length {length} shorter than input {n}")
    out = np.zeros(length, dtype=np.float64)
    out[:n] = a.data

    def backward_fn(g, grads):
        _accumulate(grads, a, g[:n])

    return _result(out, (a,), backward_fn)


def scatter(values, rows, cols, shape):
    """Place a vector of values at (row, col) positions of a zero matrix."""
    values = constant(values)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    if values.data.ndim != 1 or len(rows) != values.shape[0] or len(cols) != values.shape[0]:
        raise ShapeError("scatter needs matching 1-D values and position lists")
    out = np.zeros(shape, dtype=np.float64)
    out[rows, cols] = values.data

    def backward_fn(g, grads):
        _accumulate(grads, values, g[rows, cols])

    return _result(out, (values,), backward_fn)


# -- backward pass -------------------------------------------------------


def _toposort(root):
    """Iterative post-order over the recorded graph (graphs run deep)."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(tensor) into `.grad` of every participant.

    Repeated calls without zeroing keep adding, so gradients from several
    losses over shared subgraphs combine correctly: propagation itself uses
    a per-call scratch map, never the stored `.grad`.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        g = np.broadcast_to(g, loss.data.shape if node is loss else node.data.shape)
        if node.grad is None:
            node.grad = g.copy()
        else:
            node.grad = node.grad + g
        if node._backward_fn is not None:
            node._backward_fn(g, grads)


# -- initialization and gradient checking --------------------------------


def uniform_init(rng, shape, fan_in=None):
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; fan_in defaults to axis 0."""
    if fan_in is None:
        fan_in = shape[0]
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def grad_check(f, x, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `f` maps a tensor to a scalar tensor and must be deterministic. The
    error at each coordinate is |analytic - numeric| divided by
    (|analytic| + |numeric| + 1e-12).
    """
    probe = Tensor(np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64),
                   requires_grad=True)
    out = f(probe)
    out.backward()
    analytic = probe.grad.reshape(-1).copy()

    base = probe.data.reshape(-1).copy()
    numeric = np.zeros_like(base)
    for i in range(base.size):
        bumped = base.copy()
        bumped[i] = base[i] + h
        hi = f(Tensor(bumped.reshape(probe.shape))).item()
        bumped[i] = base[i] - h
        lo = f(Tensor(bumped.reshape(probe.shape))).item()
        numeric[i] = (hi - lo) / (2.0 * h)

    denom = np.abs(analytic) + np.abs(numeric) + 1e-12
    return float(np.max(np.abs(analytic - numeric) / denom))
