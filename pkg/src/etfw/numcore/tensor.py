"""Dense tensors with reverse-mode autodiff over a recorded closure graph.

Every differentiable op builds its output Tensor and attaches a backward
closure; ``Tensor.backward()`` topologically sorts the graph and accumulates
gradients into ``.grad``. Gradients flow to parameters (training) and to
inputs (attacks) alike.

Broadcasting is deliberately restricted: same shape, scalar against anything,
or per-row bias ``(N, M) op (M,)``. Anything else raises.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

from . import kernels

_DTYPE = np.float64
_GRAD_ENABLED = True
_DEBUG_FINITE = bool(os.environ.get("ETFW_DEBUG_FINITE"))


def set_default_dtype(dtype) -> None:
    """Select the build-wide float width (float64 default, float32 optional)."""
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float64, np.float32):
        raise ValueError(f"unsupported dtype {dtype}; use float64 or float32")
    _DTYPE = dtype.type


def default_dtype():
    return _DTYPE


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextmanager
def no_grad():
    """Disable tape recording; forward values are unchanged."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    pass


def _check_finite(name, arr):
    if _DEBUG_FINITE and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by op '{name}'")


class Tensor:
    """A dense n-d float array, optionally tracked for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, _prev=(), _op: str = "leaf"):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._prev = _prev
        self._backward = None
        self._op = _op
        _check_finite(_op, self.data)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def zeros(cls, *shape, requires_grad=False):
        return cls(np.zeros(shape, dtype=_DTYPE), requires_grad=requires_grad)

    @classmethod
    def ones(cls, *shape, requires_grad=False):
        return cls(np.ones(shape, dtype=_DTYPE), requires_grad=requires_grad)

    # -- bookkeeping ----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # -- autodiff engine --------------------------------------------------------

    def backward(self) -> None:
        """Accumulate dL/dT into .grad for every tensor reachable from this scalar."""
        if self.data.ndim != 0 and self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
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
            for p in node._prev:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accum(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
            self.grad = self.grad.reshape(self.data.shape)
        else:
            self.grad += g.reshape(self.data.shape)


def _record(out: Tensor, inputs, backward) -> Tensor:
    """Attach the backward rule when recording is on and any input needs grad."""
    tracked = [t for t in inputs if isinstance(t, Tensor) and t.requires_grad]
    if _GRAD_ENABLED and tracked:
        out.requires_grad = True
        out._prev = tuple(t for t in inputs if isinstance(t, Tensor))
        out._backward = backward
    return out


def _binary_mode(op: str, a: np.ndarray, b: np.ndarray) -> str:
    """Classify an elementwise pairing: 'same', 'a_scalar', 'b_scalar', 'row_bias'."""
    if a.shape == b.shape:
        return "same"
    if b.ndim == 0:
        return "b_scalar"
    if a.ndim == 0:
        return "a_scalar"
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return "row_bias"
    raise ShapeError(f"op '{op}': incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape, mode: str, side: str) -> np.ndarray:
    if mode == "same" or (mode == "row_bias" and side == "a"):
        return g
    if (mode == "b_scalar" and side == "b") or (mode == "a_scalar" and side == "a"):
        return np.array(g.sum())
    if mode == "row_bias" and side == "b":
        return g.sum(axis=0)
    return g


def _coerce(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_DTYPE))


def _elementwise(op, a, b, fwd, da, db):
    a, b = _coerce(a), _coerce(b)
    mode = _binary_mode(op, a.data, b.data)
    out = Tensor(fwd(a.data, b.data), _op=op)
    _check_finite(op, out.data)

    def backward(g):
        if a.requires_grad:
            a._accum(_reduce_to(da(g, a.data, b.data), a.shape, mode, "a"))
        if b.requires_grad:
            b._accum(_reduce_to(db(g, a.data, b.data), b.shape, mode, "b"))

    return _record(out, (a, b), backward)


def _unary(op, x: Tensor, fwd, dx):
    out = Tensor(fwd(x.data), _op=op)
    _check_finite(op, out.data)

    def backward(g):
        if x.requires_grad:
            x._accum(dx(g, x.data, out.data))

    return _record(out, (x,), backward)


# -- primitive ops bound as methods -------------------------------------------


def _add(a, b):
    return _elementwise("add", a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def _sub(a, b):
    return _elementwise("sub", a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def _mul(a, b):
    return _elementwise("mul", a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


Tensor.__add__ = _add
Tensor.__radd__ = lambda self, other: _add(_coerce(other), self)
Tensor.__sub__ = _sub
Tensor.__rsub__ = lambda self, other: _sub(_coerce(other), self)
Tensor.__mul__ = _mul
Tensor.__rmul__ = lambda self, other: _mul(_coerce(other), self)
Tensor.__neg__ = lambda self: _mul(self, -1.0)
Tensor.__truediv__ = lambda self, other: _mul(self, 1.0 / float(other))


def _matmul(a: Tensor, b) -> Tensor:
    b = _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"op 'matmul': expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"op 'matmul': inner dims differ, {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data, _op="matmul")
    _check_finite("matmul", out.data)

    def backward(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return _record(out, (a, b), backward)


Tensor.__matmul__ = _matmul


def _transpose(x: Tensor) -> Tensor:
    out = Tensor(x.data.T.copy(), _op="transpose")

    def backward(g):
        x._accum(g.T)

    return _record(out, (x,), backward)


Tensor.T = property(_transpose)
Tensor.transpose = _transpose


def _reshape(x: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = Tensor(x.data.reshape(shape), _op="reshape")

    def backward(g):
        x._accum(g.reshape(x.data.shape))

    return _record(out, (x,), backward)


Tensor.reshape = _reshape


def _getitem(x: Tensor, idx) -> Tensor:
    out = Tensor(x.data[idx], _op="slice")

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        x._accum(full)

    return _record(out, (x,), backward)


Tensor.__getitem__ = _getitem


def _sum(x: Tensor, axis=None) -> Tensor:
    out = Tensor(x.data.sum(axis=axis), _op="sum")

    def backward(g):
        if axis is None:
            x._accum(np.broadcast_to(g, x.data.shape))
        else:
            x._accum(np.broadcast_to(np.expand_dims(g, axis), x.data.shape))

    return _record(out, (x,), backward)


def _mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    return _sum(x, axis=axis) * (1.0 / n)


Tensor.sum = _sum
Tensor.mean = _mean

Tensor.relu = lambda x: _unary(
    "relu", x, lambda v: np.maximum(v, 0.0), lambda g, v, o: g * (v > 0)
)
Tensor.tanh = lambda x: _unary("tanh", x, np.tanh, lambda g, v, o: g * (1.0 - o * o))
Tensor.exp = lambda x: _unary("exp", x, np.exp, lambda g, v, o: g * o)
Tensor.log = lambda x: _unary("log", x, np.log, lambda g, v, o: g / v)
Tensor.sqrt = lambda x: _unary("sqrt", x, np.sqrt, lambda g, v, o: g * 0.5 / o)


def _leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    return _unary(
        "leaky_relu",
        x,
        lambda v: np.where(v > 0, v, slope * v),
        lambda g, v, o: g * np.where(v > 0, 1.0, slope),
    )


Tensor.leaky_relu = _leaky_relu


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """PReLU with a single learnable scalar slope tensor."""
    if slope.data.ndim != 0:
        raise ShapeError(f"op 'prelu': slope must be scalar, got shape {slope.shape}")
    a = float(slope.data)
    out = Tensor(np.where(x.data > 0, x.data, a * x.data), _op="prelu")

    def backward(g):
        if x.requires_grad:
            x._accum(g * np.where(x.data > 0, 1.0, a))
        if slope.requires_grad:
            slope._accum(np.array((g * np.where(x.data > 0, 0.0, x.data)).sum()))

    return _record(out, (x, slope), backward)


def _clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    # subgradient: zero outside [lo, hi], one inside (boundary counts as inside)
    return _unary(
        "clamp",
        x,
        lambda v: np.clip(v, lo, hi),
        lambda g, v, o: g * ((v >= lo) & (v <= hi)),
    )


Tensor.clamp = _clamp


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable log-sum-exp reduction along one axis."""
    m = x.data.max(axis=axis, keepdims=True)
    shifted = np.exp(x.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = Tensor(np.squeeze(m + np.log(total), axis=axis), _op="logsumexp")
    soft = shifted / total

    def backward(g):
        x._accum(np.expand_dims(g, axis) * soft)

    return _record(out, (x,), backward)


# -- convolution / pooling (hot kernels, backend-dispatched) -------------------


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d convolution via im2col + one matmul. x: (N,C,H,W), w: (F,C,KH,KW)."""
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"op 'conv2d': input channels {c} != weight channels {cw}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"op 'conv2d': kernel {kh}x{kw} larger than padded input {h}x{wd}")

    cols = kernels.im2col(x.data, kh, kw, stride, padding)  # (N*OH*OW, C*KH*KW)
    w_mat = w.data.reshape(f, -1)
    out2d = cols @ w_mat.T  # (N*OH*OW, F)
    if bias is not None:
        out2d = out2d + bias.data
    out = Tensor(out2d.reshape(n, oh, ow, f).transpose(0, 3, 1, 2), _op="conv2d")
    _check_finite("conv2d", out.data)

    def backward(g):
        g2d = g.transpose(0, 2, 3, 1).reshape(-1, f)
        if w.requires_grad:
            w._accum((g2d.T @ cols).reshape(w.data.shape))
        if bias is not None and bias.requires_grad:
            bias._accum(g2d.sum(axis=0))
        if x.requires_grad:
            dcols = g2d @ w_mat
            x._accum(kernels.col2im(dcols, x.data.shape, kh, kw, stride, padding))

    inputs = (x, w) if bias is None else (x, w, bias)
    return _record(out, inputs, backward)


def max_pool2d(x: Tensor, k: int = 2, stride: int | None = None) -> Tensor:
    """Max pool with square window; backward routes gradient to the argmax."""
    if stride is None:
        stride = k
    out_data, argmax = kernels.maxpool_forward(x.data, k, stride)
    out = Tensor(out_data, _op="max_pool2d")

    def backward(g):
        x._accum(kernels.maxpool_backward(g, argmax, x.data.shape, k, stride))

    return _record(out, (x,), backward)
