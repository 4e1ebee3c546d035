"""R-peak detection, inter-beat intervals, and alignment to ground truth."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .errors import DataError, NumericError
from .ingest import BeatAnnotations

# Minimum peak separation: 108 samples at 360 Hz (one beat per 300 ms at most,
# i.e. heart rates up to 200 bpm). Scales as round(0.3 * fs) at other rates.
MIN_DISTANCE_SECONDS = 0.3

# Matching tolerance between estimated and annotated beats: 150 ms, half the
# shortest physiologic interval at 200 bpm.
DEFAULT_MATCH_TOLERANCE_MS = 150.0


@dataclass(frozen=True)
class PeakList:
    indices: np.ndarray  # int64, ascending
    fs: float


@dataclass(frozen=True)
class IbiSeries:
    intervals_ms: np.ndarray
    anchor_times_ms: np.ndarray  # occurrence time of each interval's closing beat

    def __len__(self) -> int:
        return len(self.intervals_ms)


@dataclass(frozen=True)
class BeatMatch:
    pairs: list[tuple[int, int]]  # (estimated index, true index) in samples
    unmatched_estimated: int
    unmatched_true: int
    tolerance: int


def min_distance_for(fs: float) -> int:
    return int(round(MIN_DISTANCE_SECONDS * fs))


def detect_peaks(samples: np.ndarray, fs: float = 360.0) -> PeakList:
    """All local maxima at least ``round(0.3 * fs)`` samples apart.

    No amplitude threshold: candidates are taken in descending amplitude
    order and kept iff they are far enough from every already-kept peak,
    which makes the result invariant to positive rescaling of the signal.
    """
    x = np.asarray(samples, dtype=np.float64)
    distance = min_distance_for(fs)
    if x.ndim != 1 or x.size <= distance:
        raise NumericError(f"detect_peaks needs more than {distance} samples, got {x.size}")
    indices, _ = find_peaks(x, distance=distance)
    return PeakList(indices=indices.astype(np.int64), fs=fs)


def ibi_from_peaks(peaks: PeakList) -> IbiSeries:
    """Millisecond intervals between consecutive peaks."""
    if len(peaks.indices) < 2:
        raise NumericError("need at least 2 peaks to form an interval")
    times_ms = peaks.indices * (1000.0 / peaks.fs)
    return IbiSeries(intervals_ms=np.diff(times_ms), anchor_times_ms=times_ms[1:])


def match_beats(
    estimated: PeakList,
    truth: BeatAnnotations,
    tolerance: int | None = None,
) -> BeatMatch:
    """Greedy nearest-neighbor pairing within a sample tolerance.

    Candidate pairs are taken closest-first (ties resolved toward the
    earlier true beat, then the earlier estimate); each side is used at most
    once.
    """
    if tolerance is None:
        tolerance = int(round(DEFAULT_MATCH_TOLERANCE_MS / 1000.0 * estimated.fs))
    est = np.asarray(estimated.indices, dtype=np.int64)
    true = np.asarray(truth.beat_samples, dtype=np.int64)

    candidates = []
    start = 0
    for ti, t in enumerate(true):
        while start < est.size and est[start] < t - tolerance:
            start += 1
        j = start
        while j < est.size and est[j] <= t + tolerance:
            candidates.append((abs(int(est[j]) - int(t)), ti, j))
            j += 1
    candidates.sort()

    est_used = np.zeros(est.size, dtype=bool)
    true_used = np.zeros(true.size, dtype=bool)
    pairs = []
    for _, ti, j in candidates:
        if est_used[j] or true_used[ti]:
            continue
        est_used[j] = True
        true_used[ti] = True
        pairs.append((int(est[j]), int(true[ti])))
    pairs.sort(key=lambda p: p[1])
    return BeatMatch(
        pairs=pairs,
        unmatched_estimated=int((~est_used).sum()),
        unmatched_true=int((~true_used).sum()),
        tolerance=tolerance,
    )


def paired_ibis(
    match: BeatMatch,
    estimated: PeakList,
    truth: BeatAnnotations,
    fs: float,
) -> tuple[IbiSeries, IbiSeries]:
    """Estimated/true interval pairs over consecutive matched true beats.

    An interval is emitted only when both of its end beats (adjacent in the
    truth sequence) were matched; intervals spanning missed or spurious
    beats are excluded rather than interpolated.
    """
    est_for_true = {t: e for e, t in match.pairs}
    ms = 1000.0 / fs
    p_intervals, p_anchors, o_intervals, o_anchors = [], [], [], []
    beats = truth.beat_samples
    for i in range(1, len(beats)):
        prev_t, cur_t = int(beats[i - 1]), int(beats[i])
        if prev_t in est_for_true and cur_t in est_for_true:
            prev_e, cur_e = est_for_true[prev_t], est_for_true[cur_t]
            p_intervals.append((cur_e - prev_e) * ms)
            p_anchors.append(cur_e * ms)
            o_intervals.append((cur_t - prev_t) * ms)
            o_anchors.append(cur_t * ms)
    if not o_intervals:
        raise DataError("fewer than 2 matched beats: no interval pairs to compare")
    return (
        IbiSeries(np.asarray(p_intervals), np.asarray(p_anchors)),
        IbiSeries(np.asarray(o_intervals), np.asarray(o_anchors)),
    )


def write_peaks_csv(path: str | Path, peaks: PeakList) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index"])
        for idx in peaks.indices:
            writer.writerow([int(idx)])


def write_ibis_csv(path: str | Path, series: IbiSeries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["anchor_ms", "ibi_ms"])
        for anchor, interval in zip(series.anchor_times_ms, series.intervals_ms):
            writer.writerow([repr(float(anchor)), repr(float(interval))])
