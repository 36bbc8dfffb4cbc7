"""Pure-numpy versions of the hot kernels (the import-time fallback)."""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _out_hw(h, w, kh, kw, stride, pad):
    return (h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1


def im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    oh, ow = _out_hw(h, w, kh, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sn, sc, sh, sw = x.strides
    windows = as_strided(
        x,
        shape=(n, c, oh, ow, kh, kw),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
    )
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw).copy()


def col2im(cols, x_shape, kh, kw, stride, pad):
    n, c, h, w = x_shape
    oh, ow = _out_hw(h, w, kh, kw, stride, pad)
    patches = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    dx = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += patches[:, :, i, j]
    if pad:
        dx = dx[:, :, pad : pad + h, pad : pad + w]
    return dx


def maxpool_forward(x, k, stride):
    n, c, h, w = x.shape
    oh, ow = _out_hw(h, w, k, k, stride, 0)
    sn, sc, sh, sw = x.strides
    windows = as_strided(
        x,
        shape=(n, c, oh, ow, k, k),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
    ).reshape(n, c, oh, ow, k * k)
    argmax = windows.argmax(axis=-1)  # first max wins ties: deterministic
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return out.copy(), argmax.astype(np.int64)


def maxpool_backward(g, argmax, x_shape, k, stride):
    n, c, oh, ow = g.shape
    dx = np.zeros(x_shape, dtype=g.dtype)
    ohs = np.arange(oh)[:, None] * stride
    ows = np.arange(ow)[None, :] * stride
    rows = ohs + argmax // k  # (n, c, oh, ow)
    cols = ows + argmax % k
    ns = np.arange(n)[:, None, None, None]
    cs = np.arange(c)[None, :, None, None]
    np.add.at(dx, (ns, cs, rows, cols), g)
    return dx
