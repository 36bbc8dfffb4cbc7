"""Backend dispatch for the convolution/pooling hot kernels.

The compiled Cython extension is used when importable (and the arrays are
float64, which is its only instantiation); otherwise the pure-numpy fallback
handles everything. Set ETFW_PURE_PYTHON=1 to force the fallback.
"""

import os

import numpy as np

from . import _slow

BACKEND = "numpy"
_fast = None
if not os.environ.get("ETFW_PURE_PYTHON"):
    try:
        from . import _fast  # compiled extension, built by setup.py

        BACKEND = "cython"
    except ImportError:
        _fast = None


def _use_fast(arr) -> bool:
    return _fast is not None and arr.dtype == np.float64


def im2col(x, kh, kw, stride, pad):
    """(N,C,H,W) -> (N*OH*OW, C*KH*KW) patch matrix."""
    if _use_fast(x):
        return _fast.im2col(np.ascontiguousarray(x), kh, kw, stride, pad)
    return _slow.im2col(x, kh, kw, stride, pad)


def col2im(cols, x_shape, kh, kw, stride, pad):
    """Adjoint of im2col: scatter-add patch gradients back to (N,C,H,W)."""
    if _use_fast(cols):
        return _fast.col2im(np.ascontiguousarray(cols), x_shape, kh, kw, stride, pad)
    return _slow.col2im(cols, x_shape, kh, kw, stride, pad)


def maxpool_forward(x, k, stride):
    """Returns (pooled, argmax) where argmax holds flat within-window indices."""
    if _use_fast(x):
        return _fast.maxpool_forward(np.ascontiguousarray(x), k, stride)
    return _slow.maxpool_forward(x, k, stride)


def maxpool_backward(g, argmax, x_shape, k, stride):
    if _use_fast(g):
        return _fast.maxpool_backward(np.ascontiguousarray(g), argmax, x_shape, k, stride)
    return _slow.maxpool_backward(g, argmax, x_shape, k, stride)
