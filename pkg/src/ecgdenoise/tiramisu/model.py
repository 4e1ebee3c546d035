"""Construction and forward pass of the dense-block 1D autoencoder.

Layout: input conv, three dense-block/transition-down stages, a dense
bottleneck, three transition-up/dense-block stages with skip concatenations
from the contraction path, and a conv + tanh head mapping back to one
channel in (-1, 1).

Dense wiring: within a block every layer consumes the concatenation of the
block input and all previous layer outputs. On the way down a block forwards
that full concatenation (input included) to its transition; on the way up
only the newly produced feature maps move on, and the matching contraction
tap is concatenated after each transposed convolution.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from . import autodiff as ad
from .config import ModelConfig


def channel_plan(config: ModelConfig) -> dict:
    """Channel widths at the architectural seams (for audits and tests)."""
    c = config.initial_filters
    taps = []
    for n in config.down_block_layers:
        c = c + n * config.growth_rate
        taps.append(c)
    bottleneck_out = config.bottleneck_layers * config.growth_rate
    c = bottleneck_out
    up_concat = []
    for i, n in enumerate(config.up_block_layers):
        cat = c + taps[-(i + 1)]
        up_concat.append(cat)
        c = n * config.growth_rate
    return {
        "skip_taps": taps,
        "bottleneck_out": bottleneck_out,
        "up_concat": up_concat,
        "head_in": c,
    }


class TiramisuModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: dict[str, ad.Parameter] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.conv_kernel_names: list[str] = []
        self.np_dtype = np.float32 if config.dtype == "float32" else np.float64

    # -- construction -------------------------------------------------

    def _add_conv(self, name: str, c_out: int, c_in: int, k: int, rng: np.random.Generator,
                  transposed: bool = False) -> None:
        fan_in = c_in * k
        limit = np.sqrt(6.0 / fan_in)
        shape = (c_in, c_out, k) if transposed else (c_out, c_in, k)
        w = rng.uniform(-limit, limit, size=shape).astype(self.np_dtype)
        self.params[f"{name}.w"] = ad.Parameter(w, f"{name}.w")
        self.params[f"{name}.b"] = ad.Parameter(np.zeros(c_out, dtype=self.np_dtype), f"{name}.b")
        self.conv_kernel_names.append(f"{name}.w")

    def _add_bn(self, name: str, channels: int) -> None:
        self.params[f"{name}.gamma"] = ad.Parameter(
            np.ones(channels, dtype=self.np_dtype), f"{name}.gamma"
        )
        self.params[f"{name}.beta"] = ad.Parameter(
            np.zeros(channels, dtype=self.np_dtype), f"{name}.beta"
        )
        self.buffers[f"{name}.mean"] = np.zeros(channels, dtype=self.np_dtype)
        self.buffers[f"{name}.var"] = np.ones(channels, dtype=self.np_dtype)

    # -- forward pieces ------------------------------------------------

    def _bn_relu_conv(self, prefix: str, x: ad.Tensor, kernel: int, training: bool,
                      rng: np.random.Generator | None) -> ad.Tensor:
        cfg = self.config
        h = ad.batch_norm(
            x,
            self.params[f"{prefix}.bn.gamma"],
            self.params[f"{prefix}.bn.beta"],
            cfg.bn_eps,
            training,
            self.buffers[f"{prefix}.bn.mean"],
            self.buffers[f"{prefix}.bn.var"],
            cfg.bn_momentum,
        )
        h = ad.relu(h)
        h = ad.conv1d(h, self.params[f"{prefix}.conv.w"], self.params[f"{prefix}.conv.b"],
                      pad=kernel // 2)
        return ad.dropout(h, cfg.dropout_p, rng, training)

    def _dense_block(self, prefix: str, x: ad.Tensor, n_layers: int, training: bool,
                     rng: np.random.Generator | None) -> tuple[ad.Tensor, ad.Tensor]:
        """Returns (input concatenated with all new maps, new maps only)."""
        current = x
        feats = []
        for j in range(n_layers):
            out = self._bn_relu_conv(f"{prefix}.layer{j}", current, self.config.kernel_size,
                                     training, rng)
            feats.append(out)
            current = ad.concat([current, out])
        return current, ad.concat(feats)

    def forward_graph(self, x: ad.Tensor, training: bool = False,
                      rng: np.random.Generator | None = None) -> ad.Tensor:
        cfg = self.config
        h = ad.conv1d(x, self.params["in_conv.w"], self.params["in_conv.b"],
                      pad=cfg.kernel_size // 2)
        skips = []
        for i, n in enumerate(cfg.down_block_layers):
            full, _ = self._dense_block(f"down{i}", h, n, training, rng)
            skips.append(full)
            td = self._bn_relu_conv(f"td{i}", full, 1, training, rng)
            h = ad.maxpool2(td)
        _, h = self._dense_block("bottleneck", h, cfg.bottleneck_layers, training, rng)
        for i in range(len(cfg.up_block_layers)):
            skip = skips[-(i + 1)]
            up = ad.conv_transpose1d(
                h,
                self.params[f"tu{i}.w"],
                self.params[f"tu{i}.b"],
                cfg.tu_stride,
                target_len=skip.data.shape[2],
            )
            h = ad.concat([up, skip])
            _, h = self._dense_block(f"up{i}", h, cfg.up_block_layers[i], training, rng)
        out = ad.conv1d(h, self.params["head.w"], self.params["head.b"], pad=cfg.kernel_size // 2)
        return ad.tanh(out)

    def forward(self, windows: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        """Run windows (shape (L,) or (B, L)) through the network."""
        arr = np.asarray(windows, dtype=self.np_dtype)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.config.window_len:
            raise ConfigError(
                f"input window length {arr.shape[-1]} does not match window_len "
                f"{self.config.window_len}"
            )
        x = ad.Tensor(np.ascontiguousarray(arr[:, None, :]))
        y = self.forward_graph(x, training=training, rng=rng).data[:, 0, :]
        return y[0] if single else y

    # -- bookkeeping ----------------------------------------------------

    def parameters(self) -> list[ad.Parameter]:
        return list(self.params.values())

    def l2_parameters(self) -> list[ad.Parameter]:
        return [self.params[name] for name in self.conv_kernel_names]

    @property
    def conv_count(self) -> int:
        return len(self.conv_kernel_names)

    @property
    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def copy_state_from(self, other: "TiramisuModel") -> None:
        for name, p in self.params.items():
            p.data = other.params[name].data.copy()
        for name in self.buffers:
            self.buffers[name] = other.buffers[name].copy()


def build_model(config: ModelConfig, seed: int = 0) -> TiramisuModel:
    """Initialize the parameter tree (He-uniform convs, unit/zero batch norm)."""
    model = TiramisuModel(config)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    k = config.kernel_size
    g = config.growth_rate

    model._add_conv("in_conv", config.initial_filters, 1, k, rng)
    c = config.initial_filters
    taps = []
    for i, n in enumerate(config.down_block_layers):
        for j in range(n):
            cin = c + j * g
            model._add_bn(f"down{i}.layer{j}.bn", cin)
            model._add_conv(f"down{i}.layer{j}.conv", g, cin, k, rng)
        c = c + n * g
        taps.append(c)
        model._add_bn(f"td{i}.bn", c)
        model._add_conv(f"td{i}.conv", c, c, 1, rng)
    for j in range(config.bottleneck_layers):
        cin = c + j * g
        model._add_bn(f"bottleneck.layer{j}.bn", cin)
        model._add_conv(f"bottleneck.layer{j}.conv", g, cin, k, rng)
    c = config.bottleneck_layers * g
    for i, n in enumerate(config.up_block_layers):
        model._add_conv(f"tu{i}", c, c, k, rng, transposed=True)
        c = c + taps[-(i + 1)]
        for j in range(n):
            cin = c + j * g
            model._add_bn(f"up{i}.layer{j}.bn", cin)
            model._add_conv(f"up{i}.layer{j}.conv", g, cin, k, rng)
        c = n * g
    model._add_conv("head", 1, c, k, rng)
    return model
