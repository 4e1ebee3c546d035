"""Rate conversion, power measurement, normalization and windowing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

TARGET_FS = 360.0


def resample_to_360(samples: np.ndarray, fs_in: float) -> np.ndarray:
    """Linearly interpolate ``samples`` onto a 360 Hz grid.

    Both supported public datasets are below 360 Hz, so this is always an
    upsampling step and plain linear interpolation is alias-free. Output
    length is ``floor((n - 1) * 360 / fs_in) + 1``; a 360 Hz input is
    returned unchanged.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise NumericError("resample_to_360 needs a non-empty 1-D sequence")
    if not 0 < fs_in <= TARGET_FS:
        raise NumericError(f"unsupported input rate {fs_in} Hz (must be in (0, 360])")
    if fs_in == TARGET_FS:
        return x.copy()
    n_out = int(np.floor((x.size - 1) * TARGET_FS / fs_in)) + 1
    t_out = np.arange(n_out) * (fs_in / TARGET_FS)
    return np.interp(t_out, np.arange(x.size), x)


def mean_power(samples: np.ndarray) -> float:
    """Mean-removed power: ``(1/N) * sum((x - mean(x))^2)``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise NumericError("mean_power needs at least 2 samples")
    centered = x - x.mean()
    return float(np.mean(centered * centered))


def normalize_peak(samples: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Center and scale a window into [-1, 1] with the extreme attained.

    Returns ``(normalized, scale, offset)`` where
    ``samples == normalized * scale + offset``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise NumericError("normalize_peak needs a non-empty sequence")
    offset = float(x.mean())
    centered = x - offset
    scale = float(np.max(np.abs(centered)))
    if scale == 0.0:
        raise NumericError("normalize_peak: constant input has no amplitude")
    return centered / scale, scale, offset


@dataclass(frozen=True)
class WindowSet:
    """Fixed-length windows covering a source sequence.

    Windows start at multiples of ``stride``; if those do not reach the end
    of the source, one extra right-aligned window is appended so coverage is
    complete.
    """

    windows: np.ndarray  # (n_windows, window_len)
    offsets: np.ndarray  # int64 start index of each window
    window_len: int
    stride: int
    source_len: int


def split_windows(samples: np.ndarray, window_len: int, stride: int) -> WindowSet:
    x = np.asarray(samples)
    if window_len % 8 != 0:
        raise NumericError(f"window_len must be divisible by 8, got {window_len}")
    if not 0 < stride <= window_len:
        raise NumericError(f"stride must be in (0, window_len], got {stride}")
    n = x.shape[-1] if x.ndim else 0
    if x.ndim != 1 or n < window_len:
        raise NumericError(f"need at least window_len={window_len} samples, got {n}")

    offsets = list(range(0, n - window_len + 1, stride))
    if offsets[-1] + window_len < n:
        offsets.append(n - window_len)
    windows = np.stack([x[o : o + window_len] for o in offsets])
    return WindowSet(
        windows=windows,
        offsets=np.asarray(offsets, dtype=np.int64),
        window_len=window_len,
        stride=stride,
        source_len=n,
    )


def stitch_windows(wset: WindowSet) -> np.ndarray:
    """Reassemble a source-length sequence, averaging overlapping regions."""
    windows = np.asarray(wset.windows, dtype=np.float64)
    if windows.ndim != 2 or windows.shape != (len(wset.offsets), wset.window_len):
        raise NumericError("window set is inconsistent: shape mismatch")
    if len(wset.offsets) == 0:
        raise NumericError("window set is empty")
    total = np.zeros(wset.source_len, dtype=np.float64)
    counts = np.zeros(wset.source_len, dtype=np.float64)
    for offset, window in zip(wset.offsets, windows):
        o = int(offset)
        if o < 0 or o + wset.window_len > wset.source_len:
            raise NumericError(f"window offset {o} out of range for source {wset.source_len}")
        total[o : o + wset.window_len] += window
        counts[o : o + wset.window_len] += 1.0
    if np.any(counts == 0):
        raise NumericError("window set does not cover the source")
    return total / counts
