"""PhysioNet WFDB ingestion: header text, format-212 signals, MIT annotations.

Only storage format 212 is supported (two 12-bit two's-complement samples
packed into 3 bytes, samples interleaved across signals). Records are
converted to physical units (mV) and truncated to a configurable maximum
length; beat annotations are filtered to the standard WFDB beat codes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError, UnsupportedFormatError

# Standard WFDB beat annotation codes (N, L, R, a, V, F, J, A, S, E, j, /, Q,
# B, e, f). Everything else (rhythm changes, noise markers, comments) is not
# a beat and never enters BeatAnnotations.
BEAT_CODES = frozenset(range(1, 14)) | {25, 34, 38}

# Annotation pseudo-codes that carry no beat.
_SKIP, _NUM, _SUB, _CHN, _AUX = 59, 60, 61, 62, 63

# Records are cut to this many samples by default; the public noise records
# do not cover more.
DEFAULT_MAX_SAMPLES = 409600


@dataclass(frozen=True)
class SignalSpec:
    """One signal line of a WFDB header."""

    file_name: str
    storage_format: int
    adc_gain: float  # ADC units per mV
    baseline: int  # raw value that maps to 0 mV
    adc_resolution: int
    adc_zero: int
    initial_value: int
    checksum: int
    block_size: int
    label: str


@dataclass(frozen=True)
class RecordHeader:
    record_name: str
    n_signals: int
    fs: float
    n_samples: int
    signals: tuple[SignalSpec, ...]


@dataclass(frozen=True)
class BeatAnnotations:
    """Beat locations (sample indices, strictly ascending) and their codes."""

    beat_samples: np.ndarray  # int64
    beat_codes: np.ndarray  # int16

    def __len__(self) -> int:
        return len(self.beat_samples)

    def truncated(self, n_samples: int) -> "BeatAnnotations":
        keep = self.beat_samples < n_samples
        return BeatAnnotations(self.beat_samples[keep], self.beat_codes[keep])


@dataclass
class EcgRecord:
    """A fully ingested record: per-channel mV samples plus beat annotations."""

    header: RecordHeader
    channels: list[np.ndarray]  # float64 mV, one array per signal
    annotations: BeatAnnotations
    primary_channel: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def fs(self) -> float:
        return self.header.fs

    @property
    def n_samples(self) -> int:
        return self.header.n_samples

    @property
    def signal(self) -> np.ndarray:
        """The selected channel."""
        return self.channels[self.primary_channel]


def _parse_int(token: str, what: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"header line {lineno}: bad {what} {token!r}") from None


def parse_header(text: str) -> RecordHeader:
    """Parse the contents of a WFDB ``.hea`` file.

    Expects the simple single-segment layout: a record line
    ``name n_signals fs n_samples`` followed by one line per signal
    ``file format gain adc_res adc_zero init_val checksum block [label...]``.
    Comment lines start with ``#``.
    """
    lines = [
        (i + 1, ln.strip())
        for i, ln in enumerate(text.splitlines())
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines:
        raise ParseError("header line 1: empty header")

    lineno, record_line = lines[0]
    tokens = record_line.split()
    if len(tokens) < 4:
        raise ParseError(
            f"header line {lineno}: expected 'name n_signals fs n_samples', got {record_line!r}"
        )
    record_name = tokens[0].split("/")[0]
    n_signals = _parse_int(tokens[1], "signal count", lineno)
    # fs may carry a counter frequency suffix ("360/360"): keep the leading part.
    try:
        fs = float(tokens[2].split("/")[0])
    except ValueError:
        raise ParseError(f"header line {lineno}: bad sampling frequency {tokens[2]!r}") from None
    n_samples = _parse_int(tokens[3], "sample count", lineno)

    if n_signals < 1:
        raise ParseError(f"header line {lineno}: n_signals must be >= 1, got {n_signals}")
    if fs <= 0:
        raise ParseError(f"header line {lineno}: fs must be positive, got {fs}")
    if n_samples < 0:
        raise ParseError(f"header line {lineno}: negative sample count {n_samples}")

    if len(lines) < 1 + n_signals:
        raise ParseError(f"header declares {n_signals} signals but has {len(lines) - 1} signal lines")

    signals = []
    for lineno, line in lines[1 : 1 + n_signals]:
        tokens = line.split()
        if len(tokens) < 8:
            raise ParseError(f"header line {lineno}: expected >= 8 signal fields, got {len(tokens)}")
        file_name = tokens[0]
        fmt_token = tokens[1]
        # Format may carry "x"/":"/"+" modifiers (e.g. "212x2"); none are supported.
        fmt_digits = fmt_token.split("x")[0].split(":")[0].split("+")[0]
        storage_format = _parse_int(fmt_digits, "storage format", lineno)
        if storage_format != 212 or fmt_digits != fmt_token:
            raise UnsupportedFormatError(
                f"header line {lineno}: unsupported storage format {fmt_token!r} (only plain 212)"
            )
        # Gain may be "200", "200/mV" or "200(1024)/mV"; the parenthesised
        # value is the baseline used for mV conversion.
        gain_token = tokens[2].split("/")[0]
        baseline = None
        if "(" in gain_token:
            gain_part, base_part = gain_token.split("(", 1)
            if not base_part.endswith(")"):
                raise ParseError(f"header line {lineno}: bad gain token {tokens[2]!r}")
            baseline = _parse_int(base_part[:-1], "baseline", lineno)
            gain_token = gain_part
        try:
            adc_gain = float(gain_token)
        except ValueError:
            raise ParseError(f"header line {lineno}: bad gain {tokens[2]!r}") from None
        if adc_gain <= 0:
            raise ParseError(f"header line {lineno}: gain must be positive, got {adc_gain}")
        adc_resolution = _parse_int(tokens[3], "ADC resolution", lineno)
        adc_zero = _parse_int(tokens[4], "ADC zero", lineno)
        initial_value = _parse_int(tokens[5], "initial value", lineno)
        checksum = _parse_int(tokens[6], "checksum", lineno)
        block_size = _parse_int(tokens[7], "block size", lineno)
        label = " ".join(tokens[8:])
        signals.append(
            SignalSpec(
                file_name=file_name,
                storage_format=storage_format,
                adc_gain=adc_gain,
                baseline=adc_zero if baseline is None else baseline,
                adc_resolution=adc_resolution,
                adc_zero=adc_zero,
                initial_value=initial_value,
                checksum=checksum,
                block_size=block_size,
                label=label,
            )
        )

    return RecordHeader(
        record_name=record_name,
        n_signals=n_signals,
        fs=fs,
        n_samples=n_samples,
        signals=tuple(signals),
    )


def decode_format212(data: bytes, n_samples: int, n_signals: int) -> np.ndarray:
    """Unpack format-212 bytes into raw integer samples.

    Layout per 3-byte group: sample A = byte0 | (low nibble of byte1) << 8,
    sample B = byte2 | (high nibble of byte1) << 8, each a 12-bit
    two's-complement value. Samples are interleaved across signals.

    Returns an ``(n_signals, n_samples)`` int32 array in [-2048, 2047].
    """
    total = n_samples * n_signals
    need = math.ceil(total * 3 / 2)
    buf = np.frombuffer(data, dtype=np.uint8)
    if buf.size < need:
        raise ParseError(
            f"format-212 stream truncated at byte {buf.size}: "
            f"need {need} bytes for {total} samples"
        )
    n_groups = math.ceil(need / 3)
    padded = np.zeros(n_groups * 3, dtype=np.uint8)
    padded[:need] = buf[:need]
    groups = padded.reshape(-1, 3).astype(np.int32)
    first = groups[:, 0] | ((groups[:, 1] & 0x0F) << 8)
    second = groups[:, 2] | ((groups[:, 1] & 0xF0) << 4)
    values = np.empty(2 * n_groups, dtype=np.int32)
    values[0::2] = first
    values[1::2] = second
    values = values[:total]
    values[values > 2047] -= 4096  # sign-extend from 12 bits
    return np.ascontiguousarray(values.reshape(n_samples, n_signals).T)


def encode_format212(raw: np.ndarray) -> bytes:
    """Pack raw samples into format-212 bytes (inverse of :func:`decode_format212`).

    ``raw`` is ``(n_signals, n_samples)`` or a single 1-D sequence. Values
    must fit in 12 signed bits.
    """
    arr = np.asarray(raw, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("raw must be 1-D or (n_signals, n_samples)")
    bad = (arr < -2048) | (arr > 2047)
    if bad.any():
        sig, idx = np.argwhere(bad)[0]
        raise ParseError(
            f"sample out of 12-bit range at signal {sig}, index {idx}: {arr[sig, idx]}"
        )
    values = arr.T.reshape(-1) & 0xFFF
    if values.size % 2:
        values = np.concatenate([values, [0]])
    first = values[0::2]
    second = values[1::2]
    out = np.empty((first.size, 3), dtype=np.uint8)
    out[:, 0] = first & 0xFF
    out[:, 1] = ((first >> 8) & 0x0F) | (((second >> 8) & 0x0F) << 4)
    out[:, 2] = second & 0xFF
    return out.tobytes()


def parse_mit_annotations(data: bytes) -> BeatAnnotations:
    """Decode an MIT annotation stream into beat annotations.

    Each annotation is a little-endian byte pair: code in the high 6 bits of
    the second byte, time delta in the remaining 10 bits. SKIP (59) carries a
    4-byte long delta, NUM/SUB/CHN (60-62) modify bookkeeping state, AUX (63)
    carries a length-prefixed payload padded to byte pairs, and a zero pair
    terminates the stream. Deltas accumulate into absolute sample indices;
    only beat codes are emitted.
    """
    buf = np.frombuffer(data, dtype=np.uint8)
    if buf.size % 2:
        raise ParseError("annotation stream has odd byte count")
    pairs = buf.reshape(-1, 2).astype(np.int64)
    n = pairs.shape[0]

    samples: list[int] = []
    codes: list[int] = []
    t = 0
    i = 0
    terminated = False
    while i < n:
        b0, b1 = int(pairs[i, 0]), int(pairs[i, 1])
        code = b1 >> 2
        delta = b0 | ((b1 & 0x3) << 8)
        if code == 0 and delta == 0:
            terminated = True
            break
        if code == _SKIP:
            if i + 2 >= n:
                raise ParseError(f"SKIP long interval truncated at byte pair {i}")
            hi0, hi1 = int(pairs[i + 1, 0]), int(pairs[i + 1, 1])
            lo0, lo1 = int(pairs[i + 2, 0]), int(pairs[i + 2, 1])
            long_delta = (hi1 << 24) | (hi0 << 16) | (lo1 << 8) | lo0
            if long_delta >= 1 << 31:  # signed 32-bit
                long_delta -= 1 << 32
            t += long_delta
            i += 3
        elif code in (_NUM, _SUB, _CHN):
            i += 1
        elif code == _AUX:
            aux_pairs = math.ceil(delta / 2)
            if i + 1 + aux_pairs > n:
                raise ParseError(f"AUX payload overruns stream at byte pair {i}")
            i += 1 + aux_pairs
        else:
            t += delta
            samples.append(t)
            codes.append(code)
            i += 1
    if not terminated:
        raise ParseError("annotation stream ended without terminating zero pair")

    samples_arr = np.asarray(samples, dtype=np.int64)
    codes_arr = np.asarray(codes, dtype=np.int16)
    is_beat = np.isin(codes_arr, sorted(BEAT_CODES)) if codes else np.zeros(0, dtype=bool)
    beat_samples = samples_arr[is_beat]
    beat_codes = codes_arr[is_beat]
    if beat_samples.size and np.any(np.diff(beat_samples) <= 0):
        raise ParseError("beat annotation indices are not strictly ascending")
    return BeatAnnotations(beat_samples, beat_codes)


def _signal_checksum(raw: np.ndarray) -> int:
    """WFDB signal checksum: signed 16-bit sum of raw samples."""
    total = int(np.sum(raw, dtype=np.int64)) & 0xFFFF
    return total - 0x10000 if total >= 0x8000 else total


def _resolve_channel(header: RecordHeader, channel: int | str) -> int:
    if isinstance(channel, int):
        if not 0 <= channel < header.n_signals:
            raise DataError(
                f"record {header.record_name}: channel {channel} out of range "
                f"(has {header.n_signals})"
            )
        return channel
    labels = [s.label for s in header.signals]
    for i, label in enumerate(labels):
        if label.lower() == channel.lower():
            return i
    raise DataError(f"record {header.record_name}: no channel labelled {channel!r} in {labels}")


def _read_raw(directory: Path, name: str) -> tuple[RecordHeader, np.ndarray, list[str]]:
    header_path = directory / f"{name}.hea"
    if not header_path.exists():
        raise DataError(f"record header not found: {header_path}")
    header = parse_header(header_path.read_text())

    file_names = {s.file_name for s in header.signals}
    if len(file_names) != 1:
        raise DataError(f"record {name}: signals split across multiple files is unsupported")
    dat_path = directory / header.signals[0].file_name
    if not dat_path.exists():
        raise DataError(f"signal file not found: {dat_path}")
    raw = decode_format212(dat_path.read_bytes(), header.n_samples, header.n_signals)

    warnings = []
    for i, spec in enumerate(header.signals):
        computed = _signal_checksum(raw[i])
        if computed != spec.checksum:
            warnings.append(
                f"checksum mismatch on signal {i} ({spec.label}): "
                f"header {spec.checksum}, computed {computed}"
            )
    return header, raw, warnings


def _to_millivolts(header: RecordHeader, raw: np.ndarray) -> list[np.ndarray]:
    return [
        (raw[i].astype(np.float64) - spec.baseline) / spec.adc_gain
        for i, spec in enumerate(header.signals)
    ]


def read_record(
    directory: str | Path,
    name: str,
    channel: int | str = 0,
    max_samples: int | None = DEFAULT_MAX_SAMPLES,
) -> EcgRecord:
    """Read ``name.hea``/``.dat``/``.atr`` from ``directory`` into an :class:`EcgRecord`.

    Samples are converted to mV via ``(raw - baseline) / adc_gain`` and the
    record is truncated to ``max_samples`` with annotations filtered to the
    kept range. Checksum mismatches are recorded as warnings, not errors.
    """
    directory = Path(directory)
    header, raw, warnings = _read_raw(directory, name)

    atr_path = directory / f"{name}.atr"
    if not atr_path.exists():
        raise DataError(f"annotation file not found: {atr_path}")
    annotations = parse_mit_annotations(atr_path.read_bytes())

    n = header.n_samples if max_samples is None else min(header.n_samples, max_samples)
    channels = [ch[:n] for ch in _to_millivolts(header, raw)]
    bad = annotations.beat_samples >= header.n_samples
    if bad.any():
        raise ParseError(
            f"record {name}: annotation index {int(annotations.beat_samples[bad][0])} "
            f"beyond record length {header.n_samples}"
        )
    return EcgRecord(
        header=replace(header, n_samples=n),
        channels=channels,
        annotations=annotations.truncated(n),
        primary_channel=_resolve_channel(header, channel),
        warnings=warnings,
    )


def read_signal(
    directory: str | Path,
    name: str,
    channel: int | str = 0,
    max_samples: int | None = None,
) -> EcgRecord:
    """Like :func:`read_record` but without annotations (noise records have none)."""
    directory = Path(directory)
    header, raw, warnings = _read_raw(directory, name)
    n = header.n_samples if max_samples is None else min(header.n_samples, max_samples)
    channels = [ch[:n] for ch in _to_millivolts(header, raw)]
    empty = BeatAnnotations(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int16))
    return EcgRecord(
        header=replace(header, n_samples=n),
        channels=channels,
        annotations=empty,
        primary_channel=_resolve_channel(header, channel),
        warnings=warnings,
    )


def read_csv_record(
    csv_path: str | Path,
    beats_path: str | Path | None = None,
    fs: float = 360.0,
    name: str | None = None,
    max_samples: int | None = DEFAULT_MAX_SAMPLES,
) -> EcgRecord:
    """Fallback ingest: two-column CSV (sample_index, mV) plus an optional
    one-column beat-index text file."""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise DataError(f"CSV record not found: {csv_path}")
    rows: list[float] = []
    with open(csv_path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                idx, value = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue  # header row
                raise ParseError(f"{csv_path}: bad row {lineno}: {row!r}") from None
            if int(idx) != len(rows):
                raise ParseError(f"{csv_path}: non-contiguous sample index at row {lineno}")
            rows.append(value)
    samples = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(samples).all():
        raise ParseError(f"{csv_path}: non-finite sample values")

    if beats_path is not None:
        beats_path = Path(beats_path)
        if not beats_path.exists():
            raise DataError(f"beat index file not found: {beats_path}")
        idxs = [int(ln) for ln in beats_path.read_text().split()]
        beats = np.asarray(idxs, dtype=np.int64)
        if beats.size and (np.any(np.diff(beats) <= 0) or beats[-1] >= samples.size or beats[0] < 0):
            raise ParseError(f"{beats_path}: beat indices must be ascending and in range")
        annotations = BeatAnnotations(beats, np.ones(beats.size, dtype=np.int16))
    else:
        annotations = BeatAnnotations(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int16))

    n = samples.size if max_samples is None else min(samples.size, max_samples)
    record_name = name or csv_path.stem
    header = RecordHeader(
        record_name=record_name,
        n_signals=1,
        fs=fs,
        n_samples=n,
        signals=(
            SignalSpec(
                file_name=csv_path.name,
                storage_format=212,
                adc_gain=1.0,
                baseline=0,
                adc_resolution=12,
                adc_zero=0,
                initial_value=0,
                checksum=0,
                block_size=0,
                label=record_name,
            ),
        ),
    )
    return EcgRecord(
        header=header,
        channels=[samples[:n]],
        annotations=annotations.truncated(n),
        primary_channel=0,
    )
