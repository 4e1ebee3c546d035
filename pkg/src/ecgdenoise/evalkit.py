"""Agreement metrics and report aggregation.

RMSE and percent error follow the interval-comparison definitions used
throughout: ``sqrt(sum((P_i - O_i)^2) / n)`` and
``(1/n) * sum(|O_i - P_i| / O_i) * 100`` over paired estimated (P) and
observed (O) intervals. Bland-Altman limits of agreement use the sample
(n-1) standard deviation; quartiles use linear interpolation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .beats import IbiSeries
from .errors import NumericError


def _as_pair(p, o) -> tuple[np.ndarray, np.ndarray]:
    pv = p.intervals_ms if isinstance(p, IbiSeries) else np.asarray(p, dtype=np.float64)
    ov = o.intervals_ms if isinstance(o, IbiSeries) else np.asarray(o, dtype=np.float64)
    pv = np.asarray(pv, dtype=np.float64)
    ov = np.asarray(ov, dtype=np.float64)
    if pv.shape != ov.shape or pv.ndim != 1:
        raise NumericError(f"paired series must be equal-length 1-D, got {pv.shape} vs {ov.shape}")
    return pv, ov


def rmse_ibi(p, o) -> float:
    pv, ov = _as_pair(p, o)
    if pv.size == 0:
        raise NumericError("rmse_ibi on empty series")
    return float(np.sqrt(np.sum((pv - ov) ** 2) / pv.size))


def pct_error(p, o) -> float:
    pv, ov = _as_pair(p, o)
    if pv.size == 0:
        raise NumericError("pct_error on empty series")
    if np.any(ov <= 0):
        raise NumericError("pct_error: observed intervals must be positive")
    return float(np.mean(np.abs(ov - pv) / ov) * 100.0)


@dataclass(frozen=True)
class BlandAltman:
    mean_diff: float
    loa_upper: float
    loa_lower: float
    means: np.ndarray
    diffs: np.ndarray


def bland_altman(p, o) -> BlandAltman:
    pv, ov = _as_pair(p, o)
    if pv.size < 2:
        raise NumericError("bland_altman needs at least 2 pairs")
    diffs = pv - ov
    means = (pv + ov) / 2.0
    mean_diff = float(np.mean(diffs))
    sd = float(np.std(diffs, ddof=1))
    return BlandAltman(
        mean_diff=mean_diff,
        loa_upper=mean_diff + 1.96 * sd,
        loa_lower=mean_diff - 1.96 * sd,
        means=means,
        diffs=diffs,
    )


def pearson_r(p, o) -> float:
    pv, ov = _as_pair(p, o)
    if pv.size < 2:
        raise NumericError("pearson_r needs at least 2 pairs")
    pc = pv - pv.mean()
    oc = ov - ov.mean()
    denom = np.sqrt(np.sum(pc * pc) * np.sum(oc * oc))
    if denom == 0.0:
        raise NumericError("pearson_r is undefined for a constant series")
    return float(np.sum(pc * oc) / denom)


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]


def box_stats(values) -> BoxStats:
    """Quartiles by linear interpolation; whiskers at the furthest datum
    within 1.5 IQR of the box; everything beyond is an outlier."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise NumericError("box_stats on empty values")
    q1, median, q3 = (float(v) for v in np.percentile(x, [25.0, 50.0, 75.0]))
    iqr = q3 - q1
    low_fence, high_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= low_fence) & (x <= high_fence)]
    whisker_low = float(inside.min())
    whisker_high = float(inside.max())
    outliers = tuple(float(v) for v in np.sort(x[(x < low_fence) | (x > high_fence)]))
    return BoxStats(median, q1, q3, whisker_low, whisker_high, outliers)


@dataclass(frozen=True)
class RecordResult:
    """Metrics for one (record, SNR) evaluation."""

    record: str
    dataset: str
    snr_db: float
    rmse_ms: float
    pct_error: float
    n_ibis: int
    mean_diff_ms: float
    loa_upper_ms: float
    loa_lower_ms: float
    pearson_r: float
    matched: int
    unmatched_estimated: int
    unmatched_true: int


@dataclass
class EvalReport:
    per_record: list[RecordResult]
    per_snr: dict = field(default_factory=dict)
    per_dataset: dict = field(default_factory=dict)
    overall: dict = field(default_factory=dict)


def aggregate_report(results: list[RecordResult]) -> EvalReport:
    """Per-SNR means and box stats, plus record-count-weighted dataset averages."""
    if not results:
        raise NumericError("aggregate_report needs at least one result")
    report = EvalReport(per_record=sorted(results, key=lambda r: (r.dataset, r.record, -r.snr_db)))

    snrs = sorted({r.snr_db for r in results}, reverse=True)
    for snr in snrs:
        rows = [r for r in results if r.snr_db == snr]
        rmses = [r.rmse_ms for r in rows]
        report.per_snr[f"{snr:g}"] = {
            "n_records": len(rows),
            "mean_rmse_ms": float(np.mean(rmses)),
            "mean_pct_error": float(np.mean([r.pct_error for r in rows])),
            "rmse_box": asdict(box_stats(rmses)),
        }

    datasets = sorted({r.dataset for r in results})
    for ds in datasets:
        rows = [r for r in results if r.dataset == ds]
        per_snr = {}
        for snr in sorted({r.snr_db for r in rows}, reverse=True):
            sub = [r for r in rows if r.snr_db == snr]
            per_snr[f"{snr:g}"] = {
                "mean_rmse_ms": float(np.mean([r.rmse_ms for r in sub])),
                "mean_pct_error": float(np.mean([r.pct_error for r in sub])),
            }
        report.per_dataset[ds] = {
            "n_records": len({r.record for r in rows}),
            "mean_rmse_ms": float(np.mean([r.rmse_ms for r in rows])),
            "mean_pct_error": float(np.mean([r.pct_error for r in rows])),
            "per_snr": per_snr,
        }

    # Overall figures weight each dataset mean by its record count.
    weights = np.array([report.per_dataset[ds]["n_records"] for ds in datasets], dtype=np.float64)
    rmse_means = np.array([report.per_dataset[ds]["mean_rmse_ms"] for ds in datasets])
    pct_means = np.array([report.per_dataset[ds]["mean_pct_error"] for ds in datasets])
    report.overall = {
        "weighted_rmse_ms": float(np.sum(weights * rmse_means) / np.sum(weights)),
        "weighted_pct_error": float(np.sum(weights * pct_means) / np.sum(weights)),
        "n_results": len(results),
    }
    return report


_CSV_FIELDS = [
    "record", "dataset", "snr_db", "rmse_ms", "pct_error", "n_ibis", "mean_diff_ms",
    "loa_upper_ms", "loa_lower_ms", "pearson_r", "matched", "unmatched_estimated",
    "unmatched_true",
]


def write_report_csv(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for r in report.per_record:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in (getattr(r, f) for f in _CSV_FIELDS)])


def read_report_csv(path: str | Path) -> list[RecordResult]:
    path = Path(path)
    if not path.exists():
        raise NumericError(f"report CSV not found: {path}")
    results = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            results.append(
                RecordResult(
                    record=row["record"],
                    dataset=row["dataset"],
                    snr_db=float(row["snr_db"]),
                    rmse_ms=float(row["rmse_ms"]),
                    pct_error=float(row["pct_error"]),
                    n_ibis=int(row["n_ibis"]),
                    mean_diff_ms=float(row["mean_diff_ms"]),
                    loa_upper_ms=float(row["loa_upper_ms"]),
                    loa_lower_ms=float(row["loa_lower_ms"]),
                    pearson_r=float(row["pearson_r"]),
                    matched=int(row["matched"]),
                    unmatched_estimated=int(row["unmatched_estimated"]),
                    unmatched_true=int(row["unmatched_true"]),
                )
            )
    return results


def write_report_json(path: str | Path, report: EvalReport) -> None:
    payload = {
        "per_record": [asdict(r) for r in report.per_record],
        "per_snr": report.per_snr,
        "per_dataset": report.per_dataset,
        "overall": report.overall,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_ba_points_csv(path: str | Path, rows: list[tuple[str, float, BlandAltman]]) -> None:
    """Scatter data for agreement plots: one line per interval pair."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record", "snr_db", "mean_ms", "diff_ms"])
        for record, snr_db, ba in rows:
            for mean, diff in zip(ba.means, ba.diffs):
                writer.writerow([record, repr(float(snr_db)), repr(float(mean)), repr(float(diff))])


def write_box_data_csv(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_db", "median", "q1", "q3", "whisker_low", "whisker_high", "outliers"])
        for snr, stats in report.per_snr.items():
            box = stats["rmse_box"]
            writer.writerow([
                snr,
                repr(box["median"]), repr(box["q1"]), repr(box["q3"]),
                repr(box["whisker_low"]), repr(box["whisker_high"]),
                ";".join(repr(v) for v in box["outliers"]),
            ])
