"""Noise composition and SNR-controlled mixing.

Builds noisy variants of clean ECG as
``noisy = clean + g * (w_em * EM' + w_ma * MA' + w_bw * BW')`` where the
primed sources are standardized noise sequences read circularly from a
seeded offset, and the gain ``g`` is solved so the mixture hits the target
SNR under the mean-removed power convention of :func:`sigproc.mean_power`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .sigproc import mean_power

# 36 dB down to -36 dB in 6 dB steps: 13 variants per record.
SNR_LADDER_DB = tuple(range(36, -37, -6))

# (w_em, w_ma, w_bw): the motion-related sources dominate (w_ma > w_em > w_bw).
DEFAULT_WEIGHTS = (0.35, 0.50, 0.15)


@dataclass(frozen=True)
class NoiseBank:
    """The three noise sources, resampled to 360 Hz and standardized."""

    em: np.ndarray
    ma: np.ndarray
    bw: np.ndarray
    fs: float = 360.0

    def sources(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.em, self.ma, self.bw


@dataclass(frozen=True)
class MixSpec:
    target_snr_db: float
    weights: tuple[float, float, float]  # (w_em, w_ma, w_bw)
    seed: int
    segment_offset: int

    def __post_init__(self):
        w_em, w_ma, w_bw = self.weights
        if not (w_ma > w_em > w_bw > 0):
            raise ConfigError(
                f"mix weights must satisfy w_ma > w_em > w_bw > 0, got {self.weights}"
            )
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ConfigError(f"mix weights must sum to 1, got {sum(self.weights)}")
        if self.segment_offset < 0:
            raise ConfigError(f"segment offset must be non-negative, got {self.segment_offset}")


@dataclass(frozen=True)
class NoisyVariant:
    samples: np.ndarray
    achieved_snr_db: float
    gains: tuple[float, float, float]  # (a1, a2, a3) applied to (EM, MA, BW)
    spec: MixSpec
    source_record: str


def standardize(noise: np.ndarray) -> np.ndarray:
    """Scale to zero mean and unit variance."""
    x = np.asarray(noise, dtype=np.float64)
    if x.size < 2:
        raise NumericError("standardize needs at least 2 samples")
    centered = x - x.mean()
    sd = float(np.sqrt(np.mean(centered * centered)))
    if sd == 0.0:
        raise NumericError("standardize: constant input")
    return centered / sd


def make_noise_bank(em: np.ndarray, ma: np.ndarray, bw: np.ndarray, fs: float = 360.0) -> NoiseBank:
    return NoiseBank(em=standardize(em), ma=standardize(ma), bw=standardize(bw), fs=fs)


def _circular_segment(source: np.ndarray, length: int, offset: int) -> np.ndarray:
    if source.size == 0:
        raise NumericError("empty noise source")
    idx = (offset + np.arange(length)) % source.size
    return source[idx]


def composite_noise(
    bank: NoiseBank,
    weights: tuple[float, float, float],
    length: int,
    offset: int,
) -> np.ndarray:
    """Weighted sum of the three standardized sources over a circular segment.

    Weight validation is the caller's concern (via :class:`MixSpec`); this
    accepts any weights so degenerate mixes can be probed in tests.
    """
    w_em, w_ma, w_bw = weights
    em = _circular_segment(bank.em, length, offset)
    ma = _circular_segment(bank.ma, length, offset)
    bw = _circular_segment(bank.bw, length, offset)
    return w_em * em + w_ma * ma + w_bw * bw


def gain_for_snr(p_signal: float, p_noise: float, target_snr_db: float) -> float:
    """Gain g so that ``10*log10(p_signal / (g^2 * p_noise)) == target_snr_db``."""
    if p_signal <= 0 or p_noise <= 0:
        raise NumericError(f"powers must be positive, got signal={p_signal}, noise={p_noise}")
    return float(np.sqrt(p_signal * 10.0 ** (-target_snr_db / 10.0) / p_noise))


def mix_at_snr(clean: np.ndarray, bank: NoiseBank, spec: MixSpec, source_record: str = "") -> NoisyVariant:
    """Mix a clean channel with composite noise at the target SNR.

    The achieved SNR is recomputed from the actual sequences and stored; it
    guards against drift in the power convention.
    """
    clean = np.asarray(clean, dtype=np.float64)
    comp = composite_noise(bank, spec.weights, clean.size, spec.segment_offset)
    p_signal = mean_power(clean)
    p_noise = mean_power(comp)
    g = gain_for_snr(p_signal, p_noise, spec.target_snr_db)
    noisy = clean + g * comp
    achieved = 10.0 * np.log10(p_signal / mean_power(noisy - clean))
    if abs(achieved - spec.target_snr_db) > 0.05:
        raise NumericError(
            f"achieved SNR {achieved:.4f} dB drifted from target "
            f"{spec.target_snr_db:g} dB (power convention mismatch?)"
        )
    w_em, w_ma, w_bw = spec.weights
    return NoisyVariant(
        samples=noisy,
        achieved_snr_db=float(achieved),
        gains=(g * w_em, g * w_ma, g * w_bw),
        spec=spec,
        source_record=source_record,
    )


def variant_rng(seed: int, record_name: str, target_snr_db: float) -> np.random.Generator:
    """Independent seeded stream per (record, SNR rung).

    Hash-derived so ladder generation can run in any order (or in parallel)
    and still produce identical variants.
    """
    digest = hashlib.sha256(f"{record_name}|{target_snr_db:g}".encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *words])))


def build_snr_ladder(
    clean: np.ndarray,
    bank: NoiseBank,
    seed: int,
    record_name: str = "",
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS,
    snr_ladder_db: tuple[float, ...] = SNR_LADDER_DB,
) -> list[NoisyVariant]:
    """All ladder rungs for one record; identical seeds give identical bytes."""
    max_offset = min(src.size for src in bank.sources())
    variants = []
    for snr_db in snr_ladder_db:
        rng = variant_rng(seed, record_name, snr_db)
        offset = int(rng.integers(0, max_offset))
        spec = MixSpec(target_snr_db=snr_db, weights=weights, seed=seed, segment_offset=offset)
        variants.append(mix_at_snr(clean, bank, spec, source_record=record_name))
    return variants


# ---------------------------------------------------------------------------
# On-disk layout: raw little-endian float32 samples plus a one-line sidecar
# header, and a JSON manifest describing every variant.


def write_f32(path: str | Path, samples: np.ndarray, name: str, fs: float) -> None:
    path = Path(path)
    data = np.asarray(samples, dtype="<f4")
    path.write_bytes(data.tobytes())
    sidecar = path.with_suffix(".hdr")
    sidecar.write_text(f"{name} {fs:g} {data.size}\n")


def read_f32(path: str | Path) -> tuple[np.ndarray, str, float]:
    path = Path(path)
    sidecar = path.with_suffix(".hdr")
    if not path.exists() or not sidecar.exists():
        raise DataError(f"missing signal file or sidecar header for {path}")
    name, fs_text, length_text = sidecar.read_text().split()
    fs, length = float(fs_text), int(length_text)
    raw = path.read_bytes()
    if len(raw) != 4 * length:
        raise DataError(f"{path}: expected {4 * length} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64), name, fs


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    return json.loads(path.read_text())
