import numpy as np
import pytest

from ecgdenoise import noisemix
from ecgdenoise.errors import ConfigError, NumericError
from ecgdenoise.sigproc import mean_power
from ecgdenoise.synth import synth_ecg, synth_noise


@pytest.fixture(scope="module")
def bank():
    return noisemix.make_noise_bank(
        synth_noise(30000, "em", seed=7),
        synth_noise(30000, "ma", seed=7),
        synth_noise(30000, "bw", seed=7),
    )


@pytest.fixture(scope="module")
def clean():
    signal, _ = synth_ecg(20000, seed=4, tag="mix")
    return signal


class TestStandardize:
    def test_already_standard(self):
        x = np.array([1.0, -1.0, 1.0, -1.0])
        assert np.allclose(noisemix.standardize(x), x)

    def test_offset_scaled(self):
        assert np.allclose(noisemix.standardize(np.array([0.0, 2.0, 0.0, 2.0])), [-1, 1, -1, 1])

    def test_constant_rejected(self):
        with pytest.raises(NumericError):
            noisemix.standardize(np.full(10, 2.0))

    def test_bank_sources_standardized(self, bank):
        for src in bank.sources():
            assert abs(src.mean()) < 1e-9
            assert abs(np.var(src) - 1.0) < 1e-9


class TestComposite:
    def test_single_source_passthrough(self, bank):
        out = noisemix.composite_noise(bank, (0.0, 1.0, 0.0), 5000, 123)
        expected = bank.ma[(123 + np.arange(5000)) % bank.ma.size]
        assert np.array_equal(out, expected)

    def test_convexity_on_identical_sources(self):
        src = noisemix.standardize(np.sin(np.arange(1000) * 0.1))
        same = noisemix.NoiseBank(em=src, ma=src, bw=src)
        out = noisemix.composite_noise(same, (1 / 3, 1 / 3, 1 / 3), 1000, 0)
        assert np.allclose(out, src)

    def test_orthogonal_unit_sources_variance(self):
        n = 30000
        t = np.arange(n)
        em = np.sqrt(2.0) * np.sin(2 * np.pi * 50 * t / n)
        ma = np.sqrt(2.0) * np.sin(2 * np.pi * 100 * t / n)
        bw = np.sqrt(2.0) * np.sin(2 * np.pi * 3 * t / n)
        bank = noisemix.NoiseBank(em=em, ma=ma, bw=bw)
        out = noisemix.composite_noise(bank, (0.35, 0.50, 0.15), n, 0)
        assert abs(np.var(out) - 0.395) < 1e-3

    def test_circular_wrap(self, bank):
        length = bank.em.size + 100
        out = noisemix.composite_noise(bank, (0.35, 0.5, 0.15), length, bank.em.size - 50)
        assert out.shape == (length,)


class TestGain:
    def test_unity(self):
        assert noisemix.gain_for_snr(1.0, 1.0, 0.0) == 1.0

    def test_minus_20db(self):
        assert abs(noisemix.gain_for_snr(1.0, 1.0, -20.0) - 10.0) < 1e-12

    def test_follows_definition(self):
        g = noisemix.gain_for_snr(4.0, 1.0, 6.0)
        assert abs(g - np.sqrt(4.0 * 10.0 ** (-0.6))) < 1e-12
        achieved = 10.0 * np.log10(4.0 / (g * g * 1.0))
        assert abs(achieved - 6.0) < 1e-9

    def test_nonpositive_power(self):
        with pytest.raises(NumericError):
            noisemix.gain_for_snr(0.0, 1.0, 0.0)


class TestMix:
    def test_achieved_snr_within_tolerance(self, bank, clean):
        for target in (36.0, 0.0, -36.0):
            spec = noisemix.MixSpec(target, noisemix.DEFAULT_WEIGHTS, seed=1, segment_offset=17)
            variant = noisemix.mix_at_snr(clean, bank, spec)
            assert abs(variant.achieved_snr_db - target) <= 0.05
            recomputed = 10 * np.log10(mean_power(clean) / mean_power(variant.samples - clean))
            assert abs(recomputed - target) <= 0.05

    def test_zero_db_noise_power_matches_signal(self, bank, clean):
        spec = noisemix.MixSpec(0.0, noisemix.DEFAULT_WEIGHTS, seed=1, segment_offset=0)
        variant = noisemix.mix_at_snr(clean, bank, spec)
        ratio = mean_power(variant.samples - clean) / mean_power(clean)
        assert abs(ratio - 1.0) < 0.01

    def test_gain_ordering(self, bank, clean):
        spec = noisemix.MixSpec(-12.0, noisemix.DEFAULT_WEIGHTS, seed=1, segment_offset=5)
        a1, a2, a3 = noisemix.mix_at_snr(clean, bank, spec).gains
        assert a2 > a1 > a3 > 0

    def test_mixture_is_additive(self, bank, clean):
        spec = noisemix.MixSpec(-6.0, noisemix.DEFAULT_WEIGHTS, seed=1, segment_offset=5)
        variant = noisemix.mix_at_snr(clean, bank, spec)
        comp = noisemix.composite_noise(bank, spec.weights, clean.size, spec.segment_offset)
        g = variant.gains[1] / spec.weights[1]
        assert np.array_equal(variant.samples, clean + g * comp)

    def test_degenerate_weights_rejected(self):
        with pytest.raises(ConfigError):
            noisemix.MixSpec(0.0, (0.0, 1.0, 0.0), seed=1, segment_offset=0)
        with pytest.raises(ConfigError):
            noisemix.MixSpec(0.0, (0.5, 0.35, 0.15), seed=1, segment_offset=0)
        with pytest.raises(ConfigError):
            noisemix.MixSpec(0.0, (0.4, 0.5, 0.3), seed=1, segment_offset=0)


class TestLadder:
    def test_thirteen_variants(self, bank, clean):
        variants = noisemix.build_snr_ladder(clean, bank, seed=9, record_name="r")
        assert len(variants) == 13
        assert [v.spec.target_snr_db for v in variants] == list(range(36, -37, -6))

    def test_deterministic(self, bank, clean):
        a = noisemix.build_snr_ladder(clean, bank, seed=9, record_name="r")
        b = noisemix.build_snr_ladder(clean, bank, seed=9, record_name="r")
        for va, vb in zip(a, b):
            assert np.array_equal(va.samples, vb.samples)
            assert va.spec == vb.spec

    def test_seed_and_record_change_offsets(self, bank, clean):
        a = noisemix.build_snr_ladder(clean, bank, seed=9, record_name="r")
        b = noisemix.build_snr_ladder(clean, bank, seed=10, record_name="r")
        c = noisemix.build_snr_ladder(clean, bank, seed=9, record_name="s")
        assert {v.spec.segment_offset for v in a} != {v.spec.segment_offset for v in b}
        assert {v.spec.segment_offset for v in a} != {v.spec.segment_offset for v in c}

    def test_achieved_monotone_decreasing(self, bank, clean):
        variants = noisemix.build_snr_ladder(clean, bank, seed=9, record_name="r")
        achieved = [v.achieved_snr_db for v in variants]
        assert all(x > y for x, y in zip(achieved, achieved[1:]))

    def test_every_rung_calibrated(self, bank, clean):
        for variant in noisemix.build_snr_ladder(clean, bank, seed=9, record_name="r"):
            assert abs(variant.achieved_snr_db - variant.spec.target_snr_db) <= 0.05


class TestStorage:
    def test_f32_roundtrip(self, tmp_path, clean):
        path = tmp_path / "x.f32"
        noisemix.write_f32(path, clean, name="x", fs=360.0)
        loaded, name, fs = noisemix.read_f32(path)
        assert name == "x" and fs == 360.0
        assert np.array_equal(loaded, clean.astype(np.float32).astype(np.float64))

    def test_f32_length_check(self, tmp_path):
        path = tmp_path / "y.f32"
        noisemix.write_f32(path, np.zeros(10), name="y", fs=360.0)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(Exception, match="bytes"):
            noisemix.read_f32(path)

    def test_manifest_roundtrip(self, tmp_path):
        manifest = {"records": {"a": {"variants": [{"target_snr_db": 0.0}]}}, "version": 1}
        path = tmp_path / "manifest.json"
        noisemix.write_manifest(path, manifest)
        assert noisemix.read_manifest(path) == manifest
        first = path.read_bytes()
        noisemix.write_manifest(path, manifest)
        assert path.read_bytes() == first
