"""Versioned binary checkpoints.

Wire format (all integers little-endian):
  magic ``ECGDCP01`` (8 bytes), u32 version,
  u32 metadata length + UTF-8 JSON (model config, epoch, seed, loss history),
  u32 tensor count, then per tensor: u16 name length + name, u8 ndim,
  u32 dims, raw little-endian float32 data.

``load(save(model))`` reproduces forward outputs bitwise, which is why only
float32 models are accepted: storing a float64 model would silently round.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from .config import ModelConfig

MAGIC = b"ECGDCP01"
VERSION = 1


def save_checkpoint(
    model,
    path: str | Path,
    epoch: int = 0,
    seed: int = 0,
    loss_history: list | None = None,
) -> None:
    if model.config.dtype != "float32":
        raise ConfigError("only float32 models are checkpointed (wire format is float32)")
    meta = {
        "config": model.config.to_dict(),
        "epoch": epoch,
        "seed": seed,
        "loss_history": loss_history or [],
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")

    tensors: list[tuple[str, np.ndarray]] = []
    for name in sorted(model.params):
        tensors.append((name, model.params[name].data))
    for name in sorted(model.buffers):
        tensors.append((f"buffer:{name}", model.buffers[name]))

    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta_bytes)), meta_bytes,
              struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise DataError(f"checkpoint {self.path} truncated at byte {self.pos} (wanted {n} more)")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path: str | Path, expect_config: ModelConfig | None = None):
    """Rebuild a model from a checkpoint; returns ``(model, metadata)``.

    When ``expect_config`` is given, every architecture field must match;
    the first differing field is named in the error.
    """
    from .model import build_model  # local import to avoid a cycle

    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    reader = _Reader(path.read_bytes(), path)

    if reader.take(8) != MAGIC:
        raise DataError(f"checkpoint {path} has wrong magic bytes")
    version = reader.u32()
    if version != VERSION:
        raise DataError(f"checkpoint {path} has unsupported version {version}")
    meta = json.loads(reader.take(reader.u32()).decode("utf-8"))
    config = ModelConfig.from_dict(meta["config"])

    if expect_config is not None:
        for field_name in ModelConfig.__dataclass_fields__:
            have = getattr(config, field_name)
            want = getattr(expect_config, field_name)
            if have != want:
                raise ConfigError(
                    f"checkpoint config mismatch on {field_name!r}: "
                    f"checkpoint has {have}, expected {want}"
                )

    n_tensors = reader.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        name_len = struct.unpack("<H", reader.take(2))[0]
        name = reader.take(name_len).decode("utf-8")
        ndim = struct.unpack("<B", reader.take(1))[0]
        shape = struct.unpack(f"<{ndim}I", reader.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape)
        tensors[name] = np.ascontiguousarray(data)
    if reader.pos != len(reader.blob):
        raise DataError(f"checkpoint {path} has {len(reader.blob) - reader.pos} trailing bytes")

    model = build_model(config, seed=0)
    for name, param in model.params.items():
        if name not in tensors:
            raise DataError(f"checkpoint {path} is missing tensor {name!r}")
        if tensors[name].shape != param.data.shape:
            raise DataError(
                f"checkpoint {path}: tensor {name!r} has shape {tensors[name].shape}, "
                f"model expects {param.data.shape}"
            )
        param.data = tensors[name].copy()
    for name in model.buffers:
        key = f"buffer:{name}"
        if key not in tensors:
            raise DataError(f"checkpoint {path} is missing buffer {name!r}")
        model.buffers[name] = tensors[key].copy()
    return model, meta
