import math

import numpy as np
import pytest

from ecgdenoise import evalkit
from ecgdenoise.errors import NumericError

# ---------------------------------------------------------------------------
# Brute-force oracles: plain-Python transcriptions of the definitions.


def oracle_rmse(p, o):
    return math.sqrt(sum((pi - oi) ** 2 for pi, oi in zip(p, o)) / len(p))


def oracle_pct(p, o):
    return sum(abs(oi - pi) / oi for pi, oi in zip(p, o)) / len(p) * 100.0


def oracle_bland_altman(p, o):
    diffs = [pi - oi for pi, oi in zip(p, o)]
    mean = sum(diffs) / len(diffs)
    sd = math.sqrt(sum((d - mean) ** 2 for d in diffs) / (len(diffs) - 1))
    return mean, mean + 1.96 * sd, mean - 1.96 * sd


def oracle_pearson(p, o):
    n = len(p)
    mp, mo = sum(p) / n, sum(o) / n
    num = sum((pi - mp) * (oi - mo) for pi, oi in zip(p, o))
    den = math.sqrt(sum((pi - mp) ** 2 for pi in p) * sum((oi - mo) ** 2 for oi in o))
    return num / den


def oracle_quantile(sorted_values, q):
    """Linear interpolation between order statistics at h = (n-1) q."""
    h = (len(sorted_values) - 1) * q
    lo = math.floor(h)
    hi = math.ceil(h)
    return sorted_values[lo] + (h - lo) * (sorted_values[hi] - sorted_values[lo])


def oracle_box(values):
    s = sorted(values)
    q1 = oracle_quantile(s, 0.25)
    med = oracle_quantile(s, 0.50)
    q3 = oracle_quantile(s, 0.75)
    iqr = q3 - q1
    inside = [v for v in s if q1 - 1.5 * iqr <= v <= q3 + 1.5 * iqr]
    outliers = [v for v in s if v < q1 - 1.5 * iqr or v > q3 + 1.5 * iqr]
    return med, q1, q3, min(inside), max(inside), outliers


class TestFixtures:
    def test_rmse_fixture(self):
        assert evalkit.rmse_ibi([810.0, 790.0], [800.0, 800.0]) == 10.0

    def test_rmse_zero_and_symmetry(self):
        p = np.array([700.0, 800.0, 900.0])
        assert evalkit.rmse_ibi(p, p) == 0.0
        o = p + np.array([3.0, -4.0, 5.0])
        assert evalkit.rmse_ibi(p, o) == evalkit.rmse_ibi(o, p)

    def test_pct_fixture(self):
        assert abs(evalkit.pct_error([810.0, 790.0], [800.0, 800.0]) - 1.25) < 1e-12

    def test_pct_zero_interval_rejected(self):
        with pytest.raises(NumericError):
            evalkit.pct_error([1.0], [0.0])

    def test_bland_altman_fixture(self):
        ba = evalkit.bland_altman([810.0, 790.0], [800.0, 800.0])
        assert ba.mean_diff == 0.0
        assert abs(ba.loa_upper - 1.96 * math.sqrt(200.0)) < 1e-9
        assert abs(ba.loa_upper - 27.7186) < 1e-3
        assert abs(ba.loa_lower + 27.7186) < 1e-3

    def test_bland_altman_equal_series(self):
        ba = evalkit.bland_altman([800.0, 810.0], [800.0, 810.0])
        assert ba.mean_diff == 0.0 and ba.loa_upper == 0.0 and ba.loa_lower == 0.0

    def test_pearson_extremes(self):
        p = np.array([700.0, 800.0, 900.0])
        assert abs(evalkit.pearson_r(p, p) - 1.0) < 1e-12
        assert abs(evalkit.pearson_r(p, -p) + 1.0) < 1e-12

    def test_pearson_constant_rejected(self):
        with pytest.raises(NumericError):
            evalkit.pearson_r([1.0, 1.0], [1.0, 2.0])

    def test_pearson_affine_invariance(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(700, 900, 50)
        o = rng.uniform(700, 900, 50)
        assert abs(evalkit.pearson_r(3.0 * p + 11.0, o) - evalkit.pearson_r(p, o)) < 1e-12

    def test_box_simple(self):
        box = evalkit.box_stats([1.0, 2.0, 3.0, 4.0, 5.0])
        assert (box.median, box.q1, box.q3) == (3.0, 2.0, 4.0)
        assert box.outliers == ()
        assert box.whisker_low == 1.0 and box.whisker_high == 5.0

    def test_box_degenerate(self):
        box = evalkit.box_stats([2.0, 2.0, 2.0])
        assert box.median == box.q1 == box.q3 == box.whisker_low == box.whisker_high == 2.0
        assert box.outliers == ()

    def test_box_outlier(self):
        box = evalkit.box_stats([1.0, 2.0, 3.0, 4.0, 100.0])
        assert box.outliers == (100.0,)
        assert box.whisker_high == 4.0

    def test_rmse_dominates_mean_diff(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(700, 900, 40)
        o = rng.uniform(700, 900, 40)
        ba = evalkit.bland_altman(p, o)
        assert evalkit.rmse_ibi(p, o) >= abs(ba.mean_diff) - 1e-12


class TestOracleEquivalence:
    def test_hundred_random_pairs(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(2, 100))
            p = rng.uniform(500.0, 1200.0, n)
            o = rng.uniform(500.0, 1200.0, n)
            assert abs(evalkit.rmse_ibi(p, o) - oracle_rmse(p, o)) < 1e-9
            assert abs(evalkit.pct_error(p, o) - oracle_pct(p, o)) < 1e-9
            ba = evalkit.bland_altman(p, o)
            mean, up, lo = oracle_bland_altman(p, o)
            assert abs(ba.mean_diff - mean) < 1e-9
            assert abs(ba.loa_upper - up) < 1e-9
            assert abs(ba.loa_lower - lo) < 1e-9
            assert abs(evalkit.pearson_r(p, o) - oracle_pearson(p, o)) < 1e-9
            box = evalkit.box_stats(p)
            med, q1, q3, wlo, whi, outliers = oracle_box(p)
            assert abs(box.median - med) < 1e-9
            assert abs(box.q1 - q1) < 1e-9
            assert abs(box.q3 - q3) < 1e-9
            assert abs(box.whisker_low - wlo) < 1e-9
            assert abs(box.whisker_high - whi) < 1e-9
            assert np.allclose(box.outliers, outliers)

    def test_loa_cover_roughly_95_percent(self):
        rng = np.random.default_rng(7)
        o = rng.uniform(700.0, 900.0, 1000)
        p = o + rng.normal(0.0, 10.0, 1000)
        ba = evalkit.bland_altman(p, o)
        outside = np.mean((ba.diffs < ba.loa_lower) | (ba.diffs > ba.loa_upper))
        assert 0.02 <= outside <= 0.08


def _result(record="r", dataset="default", snr=0.0, rmse=10.0, pct=1.0):
    return evalkit.RecordResult(
        record=record, dataset=dataset, snr_db=snr, rmse_ms=rmse, pct_error=pct,
        n_ibis=100, mean_diff_ms=0.0, loa_upper_ms=1.0, loa_lower_ms=-1.0,
        pearson_r=0.99, matched=100, unmatched_estimated=0, unmatched_true=0,
    )


class TestAggregate:
    def test_single_record_passthrough(self):
        report = evalkit.aggregate_report([_result()])
        assert report.per_snr["0"]["mean_rmse_ms"] == 10.0
        assert report.overall["weighted_rmse_ms"] == 10.0

    def test_mean_of_two(self):
        report = evalkit.aggregate_report([
            _result(record="a", rmse=10.0), _result(record="b", rmse=20.0)
        ])
        assert report.per_snr["0"]["mean_rmse_ms"] == 15.0

    def test_weighted_average_by_record_count(self):
        results = [
            _result(record="a", dataset="x", rmse=10.0),
            _result(record="b", dataset="x", rmse=20.0),
            _result(record="c", dataset="y", rmse=40.0),
        ]
        report = evalkit.aggregate_report(results)
        # dataset means 15 and 40 weighted 2:1
        assert abs(report.overall["weighted_rmse_ms"] - (2 * 15.0 + 40.0) / 3) < 1e-12

    def test_report_files_roundtrip(self, tmp_path):
        report = evalkit.aggregate_report([_result(record="a"), _result(record="b", snr=-6.0)])
        csv_path = tmp_path / "report.csv"
        evalkit.write_report_csv(csv_path, report)
        loaded = evalkit.read_report_csv(csv_path)
        assert loaded == report.per_record
        evalkit.write_report_json(tmp_path / "report.json", report)
        evalkit.write_box_data_csv(tmp_path / "box.csv", report)
        assert (tmp_path / "report.json").stat().st_size > 0
        header = (tmp_path / "box.csv").read_text().splitlines()[0]
        assert header.startswith("snr_db,median,q1,q3")
