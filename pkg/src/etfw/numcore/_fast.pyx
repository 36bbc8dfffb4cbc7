# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython kernels for im2col/col2im and max-pooling (float64 only)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(double[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    out_arr = np.zeros((n * oh * ow, c * kh * kw), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, ki, kj, row, col, src_i, src_j
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                row = (b * oh + i) * ow + j
                for ch in range(c):
                    for ki in range(kh):
                        src_i = i * stride + ki - pad
                        if src_i < 0 or src_i >= h:
                            continue
                        for kj in range(kw):
                            src_j = j * stride + kj - pad
                            if src_j < 0 or src_j >= w:
                                continue
                            col = (ch * kh + ki) * kw + kj
                            out[row, col] = x[b, ch, src_i, src_j]
    return out_arr


def col2im(double[:, ::1] cols, x_shape, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    dx_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, ch, i, j, ki, kj, row, col, src_i, src_j
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                row = (b * oh + i) * ow + j
                for ch in range(c):
                    for ki in range(kh):
                        src_i = i * stride + ki - pad
                        if src_i < 0 or src_i >= h:
                            continue
                        for kj in range(kw):
                            src_j = j * stride + kj - pad
                            if src_j < 0 or src_j >= w:
                                continue
                            col = (ch * kh + ki) * kw + kj
                            dx[b, ch, src_i, src_j] += cols[row, col]
    return dx_arr


def maxpool_forward(double[:, :, :, ::1] x, int k, int stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h - k) // stride + 1
    cdef Py_ssize_t ow = (w - k) // stride + 1
    out_arr = np.empty((n, c, oh, ow), dtype=np.float64)
    arg_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef long long[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, ch, i, j, ki, kj, best_idx
    cdef double v, best
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    best = x[b, ch, i * stride, j * stride]
                    best_idx = 0
                    for ki in range(k):
                        for kj in range(k):
                            v = x[b, ch, i * stride + ki, j * stride + kj]
                            if v > best:
                                best = v
                                best_idx = ki * k + kj
                    out[b, ch, i, j] = best
                    arg[b, ch, i, j] = best_idx
    return out_arr, arg_arr


def maxpool_backward(double[:, :, :, ::1] g, long long[:, :, :, ::1] argmax, x_shape, int k, int stride):
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], oh = g.shape[2], ow = g.shape[3]
    dx_arr = np.zeros(tuple(x_shape), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, ch, i, j
    cdef long long a
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    a = argmax[b, ch, i, j]
                    dx[b, ch, i * stride + a // k, j * stride + a % k] += g[b, ch, i, j]
    return dx_arr
