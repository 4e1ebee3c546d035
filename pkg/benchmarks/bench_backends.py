#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the numpy fallback.

Times the raw convolution kernels at the channel widths the autoencoder
actually uses, plus one full forward+backward training step per backend.

    python3 benchmarks/bench_backends.py [--repeats N] [--window LEN]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ecgdenoise.tiramisu import ModelConfig, build_model, kernels_numpy
from ecgdenoise.tiramisu.train import training_loss

try:
    from ecgdenoise.tiramisu import _corekern
except ImportError:
    _corekern = None

# (label, batch, c_in, c_out, length): seams of the default and tiny models.
CONV_SHAPES = [
    ("input conv", 16, 1, 48, 2048),
    ("down layer (wide)", 16, 88, 12, 2048),
    ("bottleneck layer", 16, 348, 12, 256),
    ("up layer (widest)", 16, 360, 12, 256),
    ("tiny down layer", 16, 28, 4, 512),
    ("tiny up layer", 16, 120, 4, 128),
]


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_conv(backend, repeats: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(0)
    rows = []
    for label, batch, c_in, c_out, length in CONV_SHAPES:
        x = rng.standard_normal((batch, c_in, length)).astype(np.float32)
        w = rng.standard_normal((c_out, c_in, 3)).astype(np.float32)
        b = np.zeros(c_out, dtype=np.float32)
        dy = rng.standard_normal((batch, c_out, length)).astype(np.float32)
        fwd = _time(lambda: backend.conv1d_forward(x, w, b, 1), repeats)
        bwd = _time(lambda: backend.conv1d_backward(x, w, dy, 1), repeats)
        rows.append((label, fwd * 1e3, bwd * 1e3))
    return rows


def bench_step(backend_name: str, window: int, repeats: int) -> float:
    import ecgdenoise.tiramisu.kernels as kernels

    saved = {name: getattr(kernels, name) for name in (
        "conv1d_forward", "conv1d_backward", "convtr1d_forward",
        "convtr1d_backward", "maxpool2_forward", "maxpool2_backward",
    )}
    impl = _corekern if backend_name == "compiled" else kernels_numpy
    for name in saved:
        setattr(kernels, name, getattr(impl, name))
    try:
        config = ModelConfig(growth_rate=4, initial_filters=16, window_len=window)
        model = build_model(config, seed=0)
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, (16, window)).astype(np.float32)
        y = rng.uniform(-1, 1, (16, window)).astype(np.float32)
        drop = np.random.default_rng(2)

        def step():
            model.zero_grad()
            loss = training_loss(model, x, y, training=True, rng=drop)
            loss.backward()

        return _time(step, repeats)
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--window", type=int, default=512)
    args = parser.parse_args()

    backends = [("numpy", kernels_numpy)]
    if _corekern is not None:
        backends.append(("compiled", _corekern))
    else:
        print("compiled extension not built; benchmarking numpy only")

    print(f"{'kernel shape':<22}", end="")
    for name, _ in backends:
        print(f"{name + ' fwd':>14}{name + ' bwd':>14}", end="")
    print()
    results = {name: bench_conv(impl, args.repeats) for name, impl in backends}
    for i, (label, *_rest) in enumerate(results[backends[0][0]]):
        print(f"{label:<22}", end="")
        for name, _ in backends:
            _, fwd, bwd = results[name][i]
            print(f"{fwd:>11.2f} ms{bwd:>11.2f} ms", end="")
        print()

    print()
    for name, _ in backends:
        step_ms = bench_step(name, args.window, args.repeats) * 1e3
        print(f"full training step (batch 16, window {args.window}), {name}: {step_ms:.0f} ms")


if __name__ == "__main__":
    main()
