"""Minimal reverse-mode tape over numpy arrays.

Just enough machinery for the dense-block autoencoder: a ``Tensor`` records
its parents and a closure that routes the output gradient to them. Dense
wiring (concatenation, reused skip tensors) falls out of plain gradient
accumulation. Heavy ops delegate to the selected kernel backend.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad
        else:
            self.grad += grad

    def backward(self) -> None:
        """Backpropagate from this (scalar) tensor through the recorded tape."""
        if self.data.size != 1:
            raise NumericError("backward() starts from a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)


class Parameter(Tensor):
    __slots__ = ("name",)

    def __init__(self, data: np.ndarray, name: str):
        super().__init__(data)
        self.name = name


def conv1d(x: Tensor, w: Parameter, b: Parameter, pad: int) -> Tensor:
    y = kernels.conv1d_forward(x.data, w.data, b.data, pad)
    out = Tensor(y, parents=(x, w, b))

    def _backward(grad):
        dx, dw, db = kernels.conv1d_backward(x.data, w.data, grad, pad)
        x._accumulate(dx)
        w._accumulate(dw)
        b._accumulate(db)

    out._backward = _backward
    return out


def conv_transpose1d(x: Tensor, w: Parameter, b: Parameter, stride: int, target_len: int) -> Tensor:
    """Strided transposed convolution, cropped at the tail to ``target_len``.

    kernel 3 / stride 2 produces 2*L+1 samples; the trailing overshoot is
    dropped so the result aligns with the skip tensor it is concatenated to.
    """
    y_full = kernels.convtr1d_forward(x.data, w.data, b.data, stride)
    lfull = y_full.shape[2]
    if target_len > lfull:
        raise NumericError(f"transposed conv output {lfull} shorter than target {target_len}")
    out = Tensor(np.ascontiguousarray(y_full[:, :, :target_len]), parents=(x, w, b))

    def _backward(grad):
        if target_len < lfull:
            padded = np.zeros(y_full.shape, dtype=grad.dtype)
            padded[:, :, :target_len] = grad
        else:
            padded = grad
        dx, dw, db = kernels.convtr1d_backward(x.data, w.data, padded, stride)
        x._accumulate(dx)
        w._accumulate(dw)
        b._accumulate(db)

    out._backward = _backward
    return out


def maxpool2(x: Tensor) -> Tensor:
    y, idx = kernels.maxpool2_forward(x.data)
    out = Tensor(y, parents=(x,))

    def _backward(grad):
        x._accumulate(kernels.maxpool2_backward(idx, grad))

    out._backward = _backward
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0), parents=(x,))

    def _backward(grad):
        x._accumulate(np.where(mask, grad, 0))

    out._backward = _backward
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y, parents=(x,))

    def _backward(grad):
        x._accumulate(grad * (1.0 - y * y))

    out._backward = _backward
    return out


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: active only in training mode, identity otherwise."""
    if not training or p == 0.0:
        return x
    if rng is None:
        raise NumericError("dropout in training mode needs an RNG")
    mask = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    out = Tensor(x.data * mask, parents=(x,))

    def _backward(grad):
        x._accumulate(grad * mask)

    out._backward = _backward
    return out


def concat(tensors: list[Tensor]) -> Tensor:
    """Concatenate along the channel axis."""
    if len(tensors) == 1:
        return tensors[0]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1), parents=tuple(tensors))
    splits = np.cumsum([t.data.shape[1] for t in tensors])[:-1]

    def _backward(grad):
        for t, piece in zip(tensors, np.split(grad, splits, axis=1)):
            t._accumulate(np.ascontiguousarray(piece))

    out._backward = _backward
    return out


def batch_norm(
    x: Tensor,
    gamma: Parameter,
    beta: Parameter,
    eps: float,
    training: bool,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    momentum: float,
) -> Tensor:
    """Per-channel normalization over (batch, length).

    Training mode normalizes with batch statistics and updates the running
    estimates in place (biased variance, exponential moving average);
    inference mode applies the stored running statistics.
    """
    if training:
        mu = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None]) * inv_std[None, :, None]
    y = gamma.data[None, :, None] * xhat + beta.data[None, :, None]
    out = Tensor(y.astype(x.data.dtype, copy=False), parents=(x, gamma, beta))

    def _backward(grad):
        beta._accumulate(grad.sum(axis=(0, 2)))
        gamma._accumulate((grad * xhat).sum(axis=(0, 2)))
        dxhat = grad * gamma.data[None, :, None]
        if training:
            m = x.data.shape[0] * x.data.shape[2]
            sum_dxhat = dxhat.sum(axis=(0, 2), keepdims=True)
            sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
            dx = (inv_std[None, :, None] / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
        else:
            dx = dxhat * inv_std[None, :, None]
        x._accumulate(dx.astype(x.data.dtype, copy=False))

    out._backward = _backward
    return out


def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    if pred.data.shape != target.shape:
        raise NumericError(f"mse shape mismatch: {pred.data.shape} vs {target.shape}")
    diff = pred.data - target
    out = Tensor(np.asarray(np.mean(diff * diff)), parents=(pred,))

    def _backward(grad):
        pred._accumulate((2.0 / diff.size) * diff * grad)

    out._backward = _backward
    return out


def l2_penalty(params: list[Parameter], factor: float) -> Tensor:
    """``factor * sum(||w||^2)`` over the given parameters."""
    value = factor * sum(float(np.sum(p.data * p.data)) for p in params)
    out = Tensor(np.asarray(value, dtype=np.float64), parents=tuple(params))

    def _backward(grad):
        for p in params:
            p._accumulate((2.0 * factor * float(grad)) * p.data)

    out._backward = _backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, parents=(a, b))

    def _backward(grad):
        a._accumulate(np.asarray(grad, dtype=a.data.dtype))
        b._accumulate(np.asarray(grad, dtype=b.data.dtype))

    out._backward = _backward
    return out
