"""MSE + L2 training with Adam, plus the finite-difference gradient audit."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import NumericError
from . import autodiff as ad
from .checkpoint import save_checkpoint
from .config import TrainingConfig
from .model import TiramisuModel


class Adam:
    """Adaptive moment estimation with bias correction (betas 0.9/0.999)."""

    def __init__(self, params: list[ad.Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def training_loss(model: TiramisuModel, noisy: np.ndarray, clean: np.ndarray,
                  training: bool = True, rng: np.random.Generator | None = None) -> ad.Tensor:
    """Mean squared error plus the L2 kernel penalty, as one scalar graph node."""
    x = ad.Tensor(np.ascontiguousarray(noisy[:, None, :].astype(model.np_dtype)))
    pred = model.forward_graph(x, training=training, rng=rng)
    target = np.ascontiguousarray(clean[:, None, :].astype(model.np_dtype))
    loss = ad.mse(pred, target)
    if model.config.l2_factor > 0:
        loss = ad.add(loss, ad.l2_penalty(model.l2_parameters(), model.config.l2_factor))
    return loss


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Plain MSE between two equal-length arrays."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise NumericError(f"mse_loss shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise NumericError("mse_loss on empty arrays")
    return float(np.mean((p - t) ** 2))


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    wall_seconds: float


def _validation_loss(model: TiramisuModel, x_val: np.ndarray, y_val: np.ndarray,
                     batch_size: int) -> float:
    """Reconstruction MSE on held-out windows (inference mode, no penalty)."""
    if x_val.shape[0] == 0:
        return float("nan")
    total, count = 0.0, 0
    for start in range(0, x_val.shape[0], batch_size):
        xb = x_val[start : start + batch_size]
        yb = y_val[start : start + batch_size]
        pred = model.forward(xb, training=False)
        total += float(np.sum((pred.astype(np.float64) - yb) ** 2))
        count += yb.size
    return total / count


def _diagnostics(model: TiramisuModel, epoch: int, batch: int) -> str:
    norms = {name: float(np.linalg.norm(p.data)) for name, p in model.params.items()}
    worst = sorted(norms.items(), key=lambda kv: -kv[1])[:5]
    printed = ", ".join(f"{n}={v:.3e}" for n, v in worst)
    return f"epoch {epoch}, batch {batch}; largest parameter norms: {printed}"


def train(
    model: TiramisuModel,
    noisy_windows: np.ndarray,
    clean_windows: np.ndarray,
    tcfg: TrainingConfig,
    checkpoint_path: str | Path | None = None,
    log_path: str | Path | None = None,
) -> list[EpochStats]:
    """Train on (noisy, clean) window pairs already normalized into [-1, 1].

    A seeded fraction of the pairs is held out for the validation column of
    the training log. The checkpoint (when a path is given) is rewritten
    after every epoch. In deterministic mode the wall-time column is written
    as 0.0 so repeated runs produce byte-identical logs.
    """
    x = np.asarray(noisy_windows, dtype=model.np_dtype)
    y = np.asarray(clean_windows, dtype=model.np_dtype)
    if x.ndim != 2 or x.shape != y.shape:
        raise NumericError(f"window arrays must match: {x.shape} vs {y.shape}")
    if x.shape[0] == 0:
        raise NumericError("training dataset is empty")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([tcfg.seed, 0x7261])))
    drop_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([tcfg.seed, 0x6472])))

    n = x.shape[0]
    order = rng.permutation(n)
    n_val = int(round(n * tcfg.val_fraction))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        raise NumericError("validation split left no training windows")
    x_train, y_train = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    optimizer = Adam(model.parameters(), lr=tcfg.learning_rate)
    history: list[EpochStats] = []
    log_rows: list[tuple] = []

    for epoch in range(tcfg.epochs):
        t0 = time.monotonic()
        perm = rng.permutation(x_train.shape[0])
        epoch_loss, n_batches = 0.0, 0
        for bi, start in enumerate(range(0, x_train.shape[0], tcfg.batch_size)):
            idx = perm[start : start + tcfg.batch_size]
            optimizer.zero_grad()
            loss = training_loss(model, x_train[idx], y_train[idx], training=True, rng=drop_rng)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(f"non-finite training loss at {_diagnostics(model, epoch, bi)}")
            loss.backward()
            optimizer.step()
            epoch_loss += value
            n_batches += 1
        train_loss = epoch_loss / n_batches
        val_loss = _validation_loss(model, x_val, y_val, tcfg.batch_size)
        wall = 0.0 if tcfg.deterministic else time.monotonic() - t0
        stats = EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss, wall_seconds=wall)
        history.append(stats)
        log_rows.append((epoch, repr(train_loss), repr(val_loss), repr(wall)))
        if checkpoint_path is not None:
            save_checkpoint(
                model,
                checkpoint_path,
                epoch=epoch,
                seed=tcfg.seed,
                loss_history=[(h.epoch, h.train_loss, h.val_loss) for h in history],
            )
        if log_path is not None:
            with open(log_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epoch", "train_loss", "val_loss", "wall_seconds"])
                writer.writerows(log_rows)
    return history


def gradient_check(
    model: TiramisuModel,
    noisy: np.ndarray,
    clean: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max deviation between backprop and central finite differences.

    Deviation per parameter element is ``|g - fd| / max(|g|, |fd|, 1)``:
    relative for large gradients, absolute for small ones. Requires a
    double-precision model with dropout disabled so the loss is a smooth
    deterministic function of the parameters.
    """
    if model.config.dtype != "float64":
        raise NumericError("gradient_check requires a float64 model")
    if model.config.dropout_p != 0.0:
        raise NumericError("gradient_check requires dropout_p == 0")

    def loss_value() -> float:
        # Fresh running-stat copies each call: training-mode BN must not
        # drift the buffers between evaluations.
        saved = {k: v.copy() for k, v in model.buffers.items()}
        value = float(training_loss(model, noisy, clean, training=True).data)
        model.buffers.update(saved)
        return value

    model.zero_grad()
    saved_buffers = {k: v.copy() for k, v in model.buffers.items()}
    loss = training_loss(model, noisy, clean, training=True)
    loss.backward()
    model.buffers.update(saved_buffers)

    worst = 0.0
    for p in model.parameters():
        grad = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = loss_value()
            flat[i] = original - h
            down = loss_value()
            flat[i] = original
            fd = (up - down) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1.0)
            worst = max(worst, err)
    return worst
