"""Model and training configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

from ..errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of the dense-block autoencoder.

    The default shape has three dense blocks of 4/5/7 layers on each path,
    a 10-layer bottleneck, and one convolution per layer plus one per
    transition and per end of the network: 50 convolutions in total.
    """

    down_block_layers: tuple[int, ...] = (4, 5, 7)
    bottleneck_layers: int = 10
    up_block_layers: tuple[int, ...] = (7, 5, 4)
    growth_rate: int = 12
    initial_filters: int = 48
    kernel_size: int = 3
    dropout_p: float = 0.2
    l2_factor: float = 0.01
    pool_size: int = 2
    tu_stride: int = 2
    window_len: int = 2048
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "down_block_layers", tuple(self.down_block_layers))
        object.__setattr__(self, "up_block_layers", tuple(self.up_block_layers))
        if len(self.down_block_layers) != len(self.up_block_layers):
            raise ConfigError("down and up paths must have the same number of dense blocks")
        if any(n < 1 for n in self.down_block_layers + self.up_block_layers):
            raise ConfigError("dense blocks need at least one layer")
        if self.bottleneck_layers < 1:
            raise ConfigError("bottleneck needs at least one layer")
        divisor = self.pool_size ** len(self.down_block_layers)
        if self.window_len <= 0 or self.window_len % divisor != 0:
            raise ConfigError(
                f"window_len must be a positive multiple of {divisor}, got {self.window_len}"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.growth_rate < 1 or self.initial_filters < 1:
            raise ConfigError("growth_rate and initial_filters must be positive")
        if self.kernel_size % 2 != 1:
            raise ConfigError("kernel_size must be odd (zero padding preserves length)")
        if self.pool_size != 2 or self.tu_stride != 2:
            raise ConfigError("only pool_size=2 / tu_stride=2 transitions are supported")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def conv_count(self) -> int:
        """One conv per dense layer, per transition, plus input and head convs."""
        return (
            1
            + sum(self.down_block_layers)
            + len(self.down_block_layers)
            + self.bottleneck_layers
            + sum(self.up_block_layers)
            + len(self.up_block_layers)
            + 1
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["down_block_layers"] = list(self.down_block_layers)
        d["up_block_layers"] = list(self.up_block_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known)


def tiny_config(**overrides) -> ModelConfig:
    """Desk-scale preset: same block structure, narrower channels, short window."""
    base = dict(growth_rate=4, initial_filters=16, window_len=512)
    base.update(overrides)
    return ModelConfig(**base)


def reduced_gradcheck_config(**overrides) -> ModelConfig:
    """Smallest audit preset, double precision, dropout off."""
    base = dict(
        down_block_layers=(1, 1, 1),
        bottleneck_layers=1,
        up_block_layers=(1, 1, 1),
        growth_rate=2,
        initial_filters=4,
        window_len=16,
        dropout_p=0.0,
        dtype="float64",
    )
    base.update(overrides)
    return ModelConfig(**base)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.001
    batch_size: int = 16
    epochs: int = 80
    seed: int = 0
    train_snr_set: tuple[float, ...] = field(
        default_factory=lambda: tuple(range(36, -37, -6))
    )
    val_fraction: float = 0.1
    deterministic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "train_snr_set", tuple(self.train_snr_set))
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train_snr_set"] = list(self.train_snr_set)
        return d

    def with_overrides(self, **kwargs) -> "TrainingConfig":
        return replace(self, **kwargs)
