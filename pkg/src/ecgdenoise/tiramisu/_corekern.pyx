# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend: direct-loop 1D convolutions and pooling.

Same array conventions and function signatures as ``kernels_numpy``; the
inner loops run over the contiguous length axis so the C compiler can
vectorize them.
"""

import numpy as np

cimport cython

ctypedef fused real:
    float
    double


cdef inline object _zeros(real sample, tuple shape):
    if real is float:
        return np.zeros(shape, dtype=np.float32)
    else:
        return np.zeros(shape, dtype=np.float64)


def conv1d_forward(real[:, :, ::1] x, real[:, :, ::1] w, real[::1] b, int pad):
    cdef Py_ssize_t nb = x.shape[0], ci = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t co = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t lout = length + 2 * pad - k + 1
    y_np = _zeros(x[0, 0, 0], (nb, co, lout))
    cdef real[:, :, ::1] y = y_np
    cdef Py_ssize_t ib, io, ic, t, j, lo, hi, shift
    cdef real wv
    for ib in range(nb):
        for io in range(co):
            for j in range(lout):
                y[ib, io, j] = b[io]
            for ic in range(ci):
                for t in range(k):
                    wv = w[io, ic, t]
                    shift = t - pad
                    lo = -shift if shift < 0 else 0
                    hi = length - shift if length - shift < lout else lout
                    for j in range(lo, hi):
                        y[ib, io, j] += wv * x[ib, ic, j + shift]
    return y_np


def conv1d_backward(real[:, :, ::1] x, real[:, :, ::1] w, real[:, :, ::1] dy, int pad):
    cdef Py_ssize_t nb = x.shape[0], ci = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t co = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t lout = dy.shape[2]
    dx_np = _zeros(x[0, 0, 0], (nb, ci, length))
    dw_np = _zeros(x[0, 0, 0], (co, ci, k))
    db_np = _zeros(x[0, 0, 0], (co,))
    cdef real[:, :, ::1] dx = dx_np
    cdef real[:, :, ::1] dw = dw_np
    cdef real[::1] db = db_np
    cdef Py_ssize_t ib, io, ic, t, j, lo, hi, shift
    cdef real wv, acc
    for ib in range(nb):
        for io in range(co):
            acc = 0
            for j in range(lout):
                acc += dy[ib, io, j]
            db[io] += acc
            for ic in range(ci):
                for t in range(k):
                    wv = w[io, ic, t]
                    shift = t - pad
                    lo = -shift if shift < 0 else 0
                    hi = length - shift if length - shift < lout else lout
                    acc = 0
                    for j in range(lo, hi):
                        acc += x[ib, ic, j + shift] * dy[ib, io, j]
                        dx[ib, ic, j + shift] += wv * dy[ib, io, j]
                    dw[io, ic, t] += acc
    return dx_np, dw_np, db_np


def convtr1d_forward(real[:, :, ::1] x, real[:, :, ::1] w, real[::1] b, int stride):
    cdef Py_ssize_t nb = x.shape[0], ci = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t co = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t lfull = (length - 1) * stride + k
    y_np = _zeros(x[0, 0, 0], (nb, co, lfull))
    cdef real[:, :, ::1] y = y_np
    cdef Py_ssize_t ib, io, ic, t, i
    cdef real wv
    for ib in range(nb):
        for io in range(co):
            for i in range(lfull):
                y[ib, io, i] = b[io]
            for ic in range(ci):
                for t in range(k):
                    wv = w[ic, io, t]
                    for i in range(length):
                        y[ib, io, stride * i + t] += wv * x[ib, ic, i]
    return y_np


def convtr1d_backward(real[:, :, ::1] x, real[:, :, ::1] w, real[:, :, ::1] dy, int stride):
    cdef Py_ssize_t nb = x.shape[0], ci = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t co = w.shape[1], k = w.shape[2]
    dx_np = _zeros(x[0, 0, 0], (nb, ci, length))
    dw_np = _zeros(x[0, 0, 0], (ci, co, k))
    db_np = _zeros(x[0, 0, 0], (co,))
    cdef real[:, :, ::1] dx = dx_np
    cdef real[:, :, ::1] dw = dw_np
    cdef real[::1] db = db_np
    cdef Py_ssize_t ib, io, ic, t, i, lfull = dy.shape[2]
    cdef real wv, acc
    for ib in range(nb):
        for io in range(co):
            acc = 0
            for i in range(lfull):
                acc += dy[ib, io, i]
            db[io] += acc
            for ic in range(ci):
                for t in range(k):
                    wv = w[ic, io, t]
                    acc = 0
                    for i in range(length):
                        acc += x[ib, ic, i] * dy[ib, io, stride * i + t]
                        dx[ib, ic, i] += wv * dy[ib, io, stride * i + t]
                    dw[ic, io, t] += acc
    return dx_np, dw_np, db_np


def maxpool2_forward(real[:, :, ::1] x):
    cdef Py_ssize_t nb = x.shape[0], c = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t lout = length // 2
    y_np = _zeros(x[0, 0, 0], (nb, c, lout))
    idx_np = np.zeros((nb, c, lout), dtype=np.uint8)
    cdef real[:, :, ::1] y = y_np
    cdef unsigned char[:, :, ::1] idx = idx_np
    cdef Py_ssize_t ib, ic, i
    cdef real a0, a1
    for ib in range(nb):
        for ic in range(c):
            for i in range(lout):
                a0 = x[ib, ic, 2 * i]
                a1 = x[ib, ic, 2 * i + 1]
                if a1 > a0:  # ties resolve to the left sample
                    y[ib, ic, i] = a1
                    idx[ib, ic, i] = 1
                else:
                    y[ib, ic, i] = a0
                    idx[ib, ic, i] = 0
    return y_np, idx_np


def maxpool2_backward(unsigned char[:, :, ::1] idx, real[:, :, ::1] dy):
    cdef Py_ssize_t nb = dy.shape[0], c = dy.shape[1], lout = dy.shape[2]
    dx_np = _zeros(dy[0, 0, 0], (nb, c, 2 * lout))
    cdef real[:, :, ::1] dx = dx_np
    cdef Py_ssize_t ib, ic, i
    for ib in range(nb):
        for ic in range(c):
            for i in range(lout):
                dx[ib, ic, 2 * i + idx[ib, ic, i]] = dy[ib, ic, i]
    return dx_np
