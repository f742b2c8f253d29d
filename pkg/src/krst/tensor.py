"""Dense float64 tensors with reverse-mode differentiation.

Every op accepts leading batch axes; the graph layers rely on that to run
a whole mini-batch through one set of numpy calls.
"""
from contextlib import contextmanager

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, NumericError

_branch_log = None


@contextmanager
def record_branches():
    """Collect the discrete decisions (ReLU masks, argmax routes, k-NN
    indices) taken by every op run inside the block."""
    global _branch_log
    prev, _branch_log = _branch_log, []
    try:
        yield _branch_log
    finally:
        _branch_log = prev


def log_branch(tag, arr):
    """Record a discrete decision if a ``record_branches`` block is active."""
    if _branch_log is not None:
        _branch_log.append((tag, np.array(arr, copy=True)))


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Propagate gradients to every reachable tensor that requires them."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        self._accumulate(np.asarray(grad, dtype=np.float64).reshape(self.shape))
        for node in order:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _topo_order(root):
    seen = set()
    order = []
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    parents = tuple(p for p in parents if p.requires_grad)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = bool(parents)
    out._parents = parents
    out._backward = backward if parents else None
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a, b, opname):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise ------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    log_branch("relu", mask)

    def backward(g):
        x._accumulate(g * mask)

    return _result(np.where(mask, x.data, 0.0), (x,), backward)


_SIG_LO = np.finfo(np.float64).tiny
_SIG_HI = np.nextafter(1.0, 0.0)


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep outputs strictly inside (0, 1) where float64 would round to 0 or 1
    return np.clip(out, _SIG_LO, _SIG_HI)


def sigmoid(x):
    """Elementwise logistic function, evaluated on the overflow-free branch."""
    x = as_tensor(x)
    s = _stable_sigmoid(x.data)

    def backward(g):
        x._accumulate(g * s * (1.0 - s))

    return _result(s, (x,), backward)


def tanh(x):
    x = as_tensor(x)
    t = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - t * t))

    return _result(t, (x,), backward)


def square(x):
    x = as_tensor(x)

    def backward(g):
        x._accumulate(2.0 * g * x.data)

    return _result(x.data * x.data, (x,), backward)


def log(x):
    x = as_tensor(x)

    def backward(g):
        x._accumulate(g / x.data)

    return _result(np.log(x.data), (x,), backward)


# -- linear algebra and shape ----------------------------------------------


def matmul(a, b):
    """Batched matrix product over the last two axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    # a batch of rows times one shared matrix runs as a single 2-D product
    flat = b.ndim == 2 and a.ndim > 2
    try:
        if flat:
            out = (a.data.reshape(-1, a.shape[-1]) @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))
        else:
            out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        if a.requires_grad:
            if flat:
                a._accumulate((g.reshape(-1, g.shape[-1]) @ b.data.T).reshape(a.shape))
            else:
                a._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            if flat:
                b._accumulate(a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1]))
            else:
                b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _result(out, (a, b), backward)


def transpose(x):
    """Swap the last two axes."""
    x = as_tensor(x)

    def backward(g):
        x._accumulate(np.swapaxes(g, -1, -2))

    return _result(np.swapaxes(x.data, -1, -2), (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return _result(out, (x,), backward)


def getitem(x, key):
    x = as_tensor(x)
    out = x.data[key]

    basic = not any(isinstance(k, (list, np.ndarray)) for k in (key if isinstance(key, tuple) else (key,)))

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[key] += g
        else:
            np.add.at(full, key, g)
        x._accumulate(full)

    return _result(np.array(out, copy=True), (x,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise DimensionError(f"concat along axis {axis}: incompatible shapes {shapes}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return _result(out, tensors, backward)


def concat_features(a, b):
    """Join per-row feature blocks: columns of ``a`` then columns of ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"concat_features: row shapes differ, {a.shape} vs {b.shape}")
    return concat([a, b], axis=-1)


def gather_rows(x, idx):
    """Rows of a 2-D tensor at integer positions ``idx`` (any shape).

    Result shape is ``idx.shape + (x.shape[1],)``. The backward pass is a
    scatter-add, so repeated indices accumulate.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"gather_rows expects a 2-D source, got {x.shape}")
    idx = np.asarray(idx, dtype=np.int64)
    flat = idx.reshape(-1)
    if flat.size and (flat.min() < 0 or flat.max() >= x.shape[0]):
        raise DimensionError(f"gather_rows: index out of range for {x.shape[0]} rows")
    out = x.data[flat].reshape(idx.shape + (x.shape[1],))

    def backward(g):
        full = np.zeros_like(x.data)
        kernels.scatter_add_rows(full, flat, g.reshape(flat.size, x.shape[1]))
        x._accumulate(full)

    return _result(out, (x,), backward)


# -- reductions ---------------------------------------------------------------


def softmax(x, axis=-1):
    x = as_tensor(x)
    if np.isnan(x.data).any():
        raise NumericError("softmax: NaN in input")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _result(s, (x,), backward)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    if np.isnan(x.data).any():
        raise NumericError("log_softmax: NaN in input")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def backward(g):
        x._accumulate(g - s * g.sum(axis=axis, keepdims=True))

    return _result(out, (x,), backward)


def reduce(x, axis, mode="sum", keepdims=False, order_free=False):
    """Max, mean or sum along one axis.

    Max routes the whole incoming gradient to the lowest-index maximal
    element of each slice. With ``order_free`` sums and means add the
    values in sorted order, so permuting the axis leaves the result
    bit-identical.
    """
    x = as_tensor(x)
    axis = axis % x.ndim if x.ndim else 0
    n = x.shape[axis] if x.ndim else 0
    if n == 0:
        raise DimensionError(f"reduce({mode}): empty axis {axis} in shape {x.shape}")
    vals = np.sort(x.data, axis=axis) if order_free and mode != "max" else x.data
    if mode == "sum":
        out = vals.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            g = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g, x.shape))

    elif mode == "mean":
        out = vals.sum(axis=axis, keepdims=keepdims) / n

        def backward(g):
            g = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g / n, x.shape))

    elif mode == "max":
        arg = np.argmax(x.data, axis=axis)
        log_branch("max", arg)
        arg_k = np.expand_dims(arg, axis)
        out = np.take_along_axis(x.data, arg_k, axis=axis)
        if not keepdims:
            out = np.squeeze(out, axis)

        def backward(g):
            g = g if keepdims else np.expand_dims(g, axis)
            full = np.zeros_like(x.data)
            np.put_along_axis(full, arg_k, g, axis=axis)
            x._accumulate(full)

    else:
        raise ConfigError(f"unknown reduction mode {mode!r}; expected max, mean or sum")
    return _result(out, (x,), backward)


def total(x):
    """Sum of every element, as a scalar tensor."""
    x = as_tensor(x)

    def backward(g):
        x._accumulate(np.broadcast_to(g, x.shape))

    return _result(np.array(x.data.sum()), (x,), backward)


def detach(x):
    return Tensor(as_tensor(x).data)
