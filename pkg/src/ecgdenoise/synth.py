"""Synthetic ECG and noise records in real WFDB files.

PhysioNet data cannot be assumed present (or fetchable) on every machine, so
this module fabricates stand-in records with the same names, formats and
layout conventions: format-212 signal files, plain-text headers, MIT
annotation streams. Beat morphology is a sum of Gaussian bumps with the
T and P waves placed well inside the peak detector's exclusion distance of
the R peak, and the heart rate is slowly modulated so interval series carry
realistic variability.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy.special import expit

from .ingest import encode_format212

# (offset ms, width ms, amplitude mV) per wave.
_WAVES = (
    (-180.0, 25.0, 0.15),  # P
    (-22.0, 7.0, -0.12),  # Q
    (0.0, 10.0, 1.0),  # R
    (28.0, 8.0, -0.22),  # S
    (230.0, 50.0, 0.35),  # T
)


def _record_rng(seed: int, tag: str) -> np.random.Generator:
    import hashlib

    digest = hashlib.sha256(f"synth|{tag}".encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *words])))


def synth_ecg(
    n_samples: int,
    fs: float = 360.0,
    seed: int = 0,
    hr_base: float = 75.0,
    tag: str = "ecg",
) -> tuple[np.ndarray, np.ndarray]:
    """Clean synthetic ECG; returns (signal mV, R-peak sample indices)."""
    rng = _record_rng(seed, tag)
    rr_base_ms = 60000.0 / hr_base

    beats = []
    t_ms = 600.0
    i = 0
    margin_ms = 450.0  # room for the last T wave
    limit_ms = n_samples / fs * 1000.0 - margin_ms
    while t_ms < limit_ms:
        beats.append(int(round(t_ms * fs / 1000.0)))
        wobble = 0.06 * math.sin(2.0 * math.pi * i / 13.0) + 0.03 * float(
            np.clip(rng.standard_normal(), -2.0, 2.0)
        )
        rr = float(np.clip(rr_base_ms * (1.0 + wobble), 600.0, 1050.0))
        t_ms += rr
        i += 1

    signal = np.zeros(n_samples, dtype=np.float64)
    t_axis_ms = np.arange(n_samples) / fs * 1000.0
    # Each beat is summed over a finite window tapered smoothly to exactly
    # zero at its edges; a hard cutoff would leave micro-steps in the tails
    # that a threshold-free peak picker would report as maxima.
    span_lo, span_hi, margin = -450.0, 550.0, 100.0
    for beat in beats:
        amp_factor = 1.0 + 0.06 * float(np.clip(rng.standard_normal(), -1.5, 1.5))
        center_ms = beat / fs * 1000.0
        lo = max(0, int(np.ceil((center_ms + span_lo) * fs / 1000.0)))
        hi = min(n_samples, int((center_ms + span_hi) * fs / 1000.0))
        window_t = t_axis_ms[lo:hi]
        bump = np.zeros_like(window_t)
        for offset, width, amp in _WAVES:
            bump += (amp * amp_factor) * np.exp(
                -0.5 * ((window_t - center_ms - offset) / width) ** 2
            )
        rel = window_t - center_ms
        left = np.clip((rel - span_lo) / margin, 0.0, 1.0)
        right = np.clip((span_hi - rel) / margin, 0.0, 1.0)
        taper = 0.25 * (1.0 - np.cos(np.pi * left)) * (1.0 - np.cos(np.pi * right))
        signal[lo:hi] += bump * taper
    return signal, np.asarray(beats, dtype=np.int64)


def synth_noise(n_samples: int, kind: str, seed: int = 0, fs: float = 360.0) -> np.ndarray:
    """Band-shaped noise resembling the three contamination sources.

    ``em`` covers 1-10 Hz (overlapping the QRS band), ``ma`` is broadband
    EMG-like activity, ``bw`` is sub-hertz baseline drift.
    """
    bands = {"em": (1.0, 10.0), "ma": (2.0, 45.0), "bw": (0.05, 0.45)}
    if kind not in bands:
        raise ValueError(f"noise kind must be one of {sorted(bands)}, got {kind!r}")
    lo, hi = bands[kind]
    rng = _record_rng(seed, f"noise-{kind}")
    white = rng.standard_normal(n_samples)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / fs)
    width = max(0.2 * (hi - lo), 0.02)
    mask = expit((freqs - lo) / width) * expit(-(freqs - hi) / width)
    shaped = np.fft.irfft(spectrum * mask, n=n_samples)
    shaped = shaped / np.std(shaped)
    return 0.5 * shaped  # ~0.5 mV RMS before standardization downstream


def _signal_checksum(raw: np.ndarray) -> int:
    total = int(np.sum(raw, dtype=np.int64)) & 0xFFFF
    return total - 0x10000 if total >= 0x8000 else total


def encode_mit_annotations(beat_samples: np.ndarray, codes: np.ndarray | None = None) -> bytes:
    """Beat indices -> MIT annotation byte-pair stream (terminated)."""
    samples = np.asarray(beat_samples, dtype=np.int64)
    if codes is None:
        codes = np.ones(samples.size, dtype=np.int64)
    out = bytearray()
    t = 0
    for sample, code in zip(samples, codes):
        delta = int(sample) - t
        if delta < 0:
            raise ValueError("beat samples must be ascending")
        if delta >= 1024:
            # SKIP pair, 4-byte long delta (high word first), then the
            # annotation pair with a zero delta.
            out += bytes((0, 59 << 2))
            out += bytes(((delta >> 16) & 0xFF, (delta >> 24) & 0xFF, delta & 0xFF, (delta >> 8) & 0xFF))
            out += bytes((0, (int(code) << 2) & 0xFF))
        else:
            out += bytes((delta & 0xFF, ((int(code) << 2) | (delta >> 8)) & 0xFF))
        t = int(sample)
    out += bytes((0, 0))
    return bytes(out)


def write_wfdb_record(
    directory: str | Path,
    name: str,
    signal_mv: np.ndarray,
    fs: float = 360.0,
    beats: np.ndarray | None = None,
    adc_gain: float = 200.0,
    adc_zero: int = 1024,
    label: str = "MLII",
) -> None:
    """Emit ``name.hea``/``name.dat`` (and ``name.atr`` when beats are given)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    raw = np.clip(np.round(np.asarray(signal_mv) * adc_gain + adc_zero), -2048, 2047).astype(
        np.int32
    )
    checksum = _signal_checksum(raw)
    initial = int(raw[0]) if raw.size else 0
    header = (
        f"{name} 1 {fs:g} {raw.size}\n"
        f"{name}.dat 212 {adc_gain:g} 11 {adc_zero} {initial} {checksum} 0 {label}\n"
    )
    (directory / f"{name}.hea").write_text(header)
    (directory / f"{name}.dat").write_bytes(encode_format212(raw))
    if beats is not None:
        (directory / f"{name}.atr").write_bytes(encode_mit_annotations(beats))


# Stand-in roster: heart-rate bases per record name.
DEMO_RECORDS = {"100": 75.0, "101": 72.0, "102": 68.0}


_DEMO_CONFIG = """\
# Demo pipeline over the synthetic stand-in dataset.
# Paths are relative to this file's directory.
data.records_root = records
data.noise_root = noise
data.output_root = out
data.max_samples = {n_samples}
records.train = 100 102
records.test = 101
mix.seed = 1234
model.growth_rate = 4
model.initial_filters = 16
model.window_len = 512
train.epochs = 8
train.seed = 7
train.snr_set = 0
train.stride = 512
train.val_fraction = 0.05
eval.snr_set = 0 -6 -12
eval.stride = 256
run.deterministic = true
"""


def make_demo_dataset(
    root: str | Path,
    seed: int = 0,
    n_samples: int = 409600,
    noise_samples: int = 300000,
) -> dict[str, Path]:
    """Write the synthetic stand-in dataset: three ECG records, EM/MA/BW noise,
    and a ready-to-run pipeline config."""
    root = Path(root)
    records_dir = root / "records"
    noise_dir = root / "noise"
    for name, hr in DEMO_RECORDS.items():
        signal, beat_idx = synth_ecg(n_samples, seed=seed, hr_base=hr, tag=f"record-{name}")
        write_wfdb_record(records_dir, name, signal, beats=beat_idx)
    for kind in ("em", "ma", "bw"):
        noise = synth_noise(noise_samples, kind, seed=seed)
        write_wfdb_record(noise_dir, kind, noise, label=kind.upper())
    config_path = root / "synthetic.cfg"
    config_path.write_text(_DEMO_CONFIG.format(n_samples=n_samples))
    return {"records": records_dir, "noise": noise_dir, "config": config_path}
