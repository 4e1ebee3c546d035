"""Pure-numpy kernel backend (im2col + BLAS matmul).

Array conventions (shared with the compiled backend):
  x: (batch, in_channels, length), C-contiguous, float32 or float64
  conv weight: (out_channels, in_channels, kernel)
  transposed-conv weight: (in_channels, out_channels, kernel)
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x: np.ndarray, kernel: int, pad: int) -> np.ndarray:
    """(B, Ci, L) -> (Ci*K, B*Lout) patch matrix."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    b, ci, _ = x.shape
    cols = sliding_window_view(x, kernel, axis=2)  # (B, Ci, Lout, K) view
    lout = cols.shape[2]
    return np.ascontiguousarray(cols.transpose(1, 3, 0, 2)).reshape(ci * kernel, b * lout)


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, pad: int) -> np.ndarray:
    batch, _, length = x.shape
    co, ci, k = w.shape
    lout = length + 2 * pad - k + 1
    cols = _im2col(x, k, pad)
    y = w.reshape(co, ci * k) @ cols
    y = y.reshape(co, batch, lout).transpose(1, 0, 2) + b[None, :, None]
    return np.ascontiguousarray(y)


def conv1d_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray, pad: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    batch, ci, length = x.shape
    co, _, k = w.shape
    lout = dy.shape[2]
    cols = _im2col(x, k, pad)
    dyt = np.ascontiguousarray(dy.transpose(1, 0, 2)).reshape(co, batch * lout)

    dw = (dyt @ cols.T).reshape(co, ci, k)
    db = dy.sum(axis=(0, 2))

    dcols = (w.reshape(co, ci * k).T @ dyt).reshape(ci, k, batch, lout)
    dxp = np.zeros((batch, ci, length + 2 * pad), dtype=x.dtype)
    for t in range(k):
        dxp[:, :, t : t + lout] += dcols[:, t].transpose(1, 0, 2)
    dx = dxp[:, :, pad : pad + length] if pad else dxp
    return np.ascontiguousarray(dx), dw, db


def convtr1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    batch, ci, length = x.shape
    _, co, k = w.shape
    lfull = (length - 1) * stride + k
    # t[b, co, k, l] = sum_ci x[b, ci, l] * w[ci, co, k]
    t = np.tensordot(x, w, axes=([1], [0])).transpose(0, 2, 3, 1)
    y = np.zeros((batch, co, lfull), dtype=x.dtype)
    for tap in range(k):
        y[:, :, tap : tap + (length - 1) * stride + 1 : stride] += t[:, :, tap, :]
    y += b[None, :, None]
    return y


def convtr1d_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray, stride: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    batch, ci, length = x.shape
    _, co, k = w.shape
    # g[k, b, co, l] = dy at the positions tap k wrote to
    g = np.stack(
        [dy[:, :, tap : tap + (length - 1) * stride + 1 : stride] for tap in range(k)]
    )
    dx = np.einsum("kbol,iok->bil", g, w, optimize=True).astype(x.dtype, copy=False)
    dw = np.einsum("bil,kbol->iok", x, g, optimize=True).astype(w.dtype, copy=False)
    db = dy.sum(axis=(0, 2))
    return np.ascontiguousarray(dx), np.ascontiguousarray(dw), db


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    batch, c, length = x.shape
    pairs = x.reshape(batch, c, length // 2, 2)
    idx = pairs.argmax(axis=3).astype(np.uint8)  # ties resolve to the left sample
    y = np.take_along_axis(pairs, idx[..., None].astype(np.intp), axis=3)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2_backward(idx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    batch, c, lout = dy.shape
    dpairs = np.zeros((batch, c, lout, 2), dtype=dy.dtype)
    np.put_along_axis(dpairs, idx[..., None].astype(np.intp), dy[..., None], axis=3)
    return dpairs.reshape(batch, c, 2 * lout)
