"""End-to-end pipeline and CLI behavior on a reduced synthetic dataset."""

import json

import numpy as np
import pytest

from ecgdenoise import noisemix, pipeline
from ecgdenoise.cli import main as cli_main
from ecgdenoise.errors import ConfigError, DataError
from ecgdenoise.sigproc import mean_power
from ecgdenoise.synth import make_demo_dataset

N_SAMPLES = 24576  # ~68 s at 360 Hz keeps the suite quick
NOISE_SAMPLES = 20000

CONFIG_TEMPLATE = """\
# reduced smoke configuration
data.records_root = {records}
data.noise_root = {noise}
data.output_root = {out}
data.max_samples = {n_samples}
records.train = 100 102
records.test = 101
records.dataset.100 = demo
records.dataset.101 = demo
records.dataset.102 = demo
mix.seed = 77
mix.snr_ladder = 36 0 -36
model.growth_rate = 2
model.initial_filters = 4
model.window_len = 512
model.dropout_p = 0.0
train.epochs = 1
train.seed = 5
train.snr_set = 0
train.stride = 512
eval.snr_set = 0
eval.stride = 256
run.deterministic = true
"""


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    paths = make_demo_dataset(root, seed=3, n_samples=N_SAMPLES, noise_samples=NOISE_SAMPLES)
    return paths


@pytest.fixture()
def config_file(dataset, tmp_path):
    cfg_path = tmp_path / "pipeline.cfg"
    cfg_path.write_text(
        CONFIG_TEMPLATE.format(
            records=dataset["records"], noise=dataset["noise"], out=tmp_path / "out",
            n_samples=N_SAMPLES,
        )
    )
    return cfg_path


class TestConfigParsing:
    def test_full_parse(self, config_file):
        config = pipeline.load_config(config_file)
        assert config.train_records == ("100", "102")
        assert config.test_records == ("101",)
        assert config.model.window_len == 512
        assert config.training.train_snr_set == (0.0,)
        assert config.deterministic is True
        assert config.dataset_of("100") == "demo"

    def test_unknown_key_rejected(self, config_file, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text(config_file.read_text() + "mystery.key = 1\n")
        with pytest.raises(ConfigError, match="mystery.key"):
            pipeline.load_config(bad)

    def test_overlapping_splits_rejected(self, config_file, tmp_path):
        text = config_file.read_text().replace("records.test = 101", "records.test = 100")
        bad = tmp_path / "overlap.cfg"
        bad.write_text(text)
        with pytest.raises(ConfigError, match="overlap"):
            pipeline.load_config(bad)

    def test_render_roundtrip(self, config_file, tmp_path):
        config = pipeline.load_config(config_file)
        rendered = tmp_path / "rendered.cfg"
        rendered.write_text(pipeline.render_config(config))
        again = pipeline.load_config(rendered)
        assert again.model == config.model
        assert again.training == config.training
        assert again.train_records == config.train_records


class TestPrepare:
    def test_outputs_and_calibration(self, config_file):
        config = pipeline.load_config(config_file)
        manifest_path = pipeline.cmd_prepare(config)
        manifest = json.loads(manifest_path.read_text())
        assert sorted(manifest["records"]) == ["100", "101", "102"]
        prepared = manifest_path.parent
        for name, entry in manifest["records"].items():
            assert len(entry["variants"]) == 3  # reduced ladder in this config
            clean, _, _ = noisemix.read_f32(prepared / entry["clean_file"])
            for variant in entry["variants"]:
                noisy, _, _ = noisemix.read_f32(prepared / variant["file"])
                achieved = 10 * np.log10(mean_power(clean) / mean_power(noisy - clean))
                assert abs(achieved - variant["target_snr_db"]) <= 0.05
                a1, a2, a3 = variant["gains"]
                assert a2 > a1 > a3 > 0
        assert (config.output_root / "config_prepare.resolved.cfg").exists()

    def test_missing_record_named(self, config_file, tmp_path):
        text = config_file.read_text().replace("records.test = 101", "records.test = 999")
        bad = tmp_path / "missing.cfg"
        bad.write_text(text)
        config = pipeline.load_config(bad)
        with pytest.raises(DataError, match="999"):
            pipeline.cmd_prepare(config)

    def test_rerun_is_byte_identical(self, config_file):
        config = pipeline.load_config(config_file)
        path = pipeline.cmd_prepare(config)
        first = path.read_bytes()
        assert pipeline.cmd_prepare(config).read_bytes() == first


@pytest.fixture(scope="module")
def run_dir(dataset, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg_path = tmp / "pipeline.cfg"
    cfg_path.write_text(
        CONFIG_TEMPLATE.format(
            records=dataset["records"], noise=dataset["noise"], out=tmp / "out",
            n_samples=N_SAMPLES,
        )
    )
    config = pipeline.load_config(cfg_path)
    pipeline.cmd_prepare(config)
    checkpoint = pipeline.cmd_train(config)
    eval_dir = pipeline.cmd_eval(config, checkpoint)
    return config, checkpoint, eval_dir


class TestTrainEvalReport:

    def test_train_outputs(self, run_dir):
        config, checkpoint, _ = run_dir
        assert checkpoint.exists()
        loss_csv = (config.output_root / "train" / "loss.csv").read_text().splitlines()
        assert loss_csv[0] == "epoch,train_loss,val_loss,wall_seconds"
        assert len(loss_csv) == 2  # one epoch
        assert loss_csv[1].endswith("0.0")  # deterministic mode zeroes wall time

    def test_eval_reports(self, run_dir):
        _, _, eval_dir = run_dir
        for name in ("report.csv", "report.json", "ba_points.csv", "box_data.csv"):
            assert (eval_dir / name).exists()
        report = json.loads((eval_dir / "report.json").read_text())
        assert report["per_record"][0]["record"] == "101"
        assert report["per_record"][0]["n_ibis"] > 5
        assert (eval_dir / "peaks" / "101_snr+0dB.csv").exists()
        assert (eval_dir / "ibis" / "101_snr+0dB.csv").exists()

    def test_leakage_rejected_at_config_level(self, run_dir):
        config, _, _ = run_dir
        from dataclasses import replace

        with pytest.raises(ConfigError, match="overlap"):
            replace(config, test_records=("100",))

    def test_leakage_rejected_by_eval(self, run_dir):
        # Defense in depth: even a hand-built config with overlapping splits
        # must be refused by cmd_eval itself.
        config, checkpoint, _ = run_dir
        import copy

        leaky = copy.copy(config)
        leaky.test_records = ("100",)
        with pytest.raises(ConfigError, match="train split"):
            pipeline.cmd_eval(leaky, checkpoint)

    def test_checkpoint_window_mismatch(self, run_dir):
        config, checkpoint, _ = run_dir
        from dataclasses import replace

        from ecgdenoise.tiramisu import ModelConfig

        bad = replace(config, model=ModelConfig(
            growth_rate=2, initial_filters=4, window_len=1024, dropout_p=0.0))
        with pytest.raises(ConfigError, match="window_len"):
            pipeline.cmd_eval(bad, checkpoint)

    def test_report_command(self, run_dir):
        config, _, _ = run_dir
        table = pipeline.cmd_report(config)
        assert "weighted average" in table
        assert "0" in table


class TestCli:
    def test_full_cycle_and_exit_codes(self, dataset, tmp_path):
        cfg_path = tmp_path / "cli.cfg"
        cfg_path.write_text(
            CONFIG_TEMPLATE.format(
                records=dataset["records"], noise=dataset["noise"], out=tmp_path / "out",
                n_samples=N_SAMPLES,
            )
        )
        assert cli_main(["prepare", "--config", str(cfg_path)]) == 0
        assert cli_main(["train", "--config", str(cfg_path)]) == 0
        assert cli_main(["eval", "--config", str(cfg_path)]) == 0
        assert cli_main(["report", "--config", str(cfg_path)]) == 0
        assert cli_main(["fetch", "--config", str(cfg_path)]) == 0

    def test_usage_error_exit_1(self):
        assert cli_main(["prepare"]) == 1  # --config is required
        assert cli_main(["no-such-command"]) == 1

    def test_config_error_exit_1(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("data.records_root = x\n")  # missing required keys
        assert cli_main(["prepare", "--config", str(bad)]) == 1

    def test_data_error_exit_2(self, dataset, tmp_path):
        cfg_path = tmp_path / "cli2.cfg"
        cfg_path.write_text(
            CONFIG_TEMPLATE.format(
                records=dataset["records"], noise=dataset["noise"], out=tmp_path / "out",
                n_samples=N_SAMPLES,
            ).replace("records.test = 101", "records.test = 999")
        )
        assert cli_main(["prepare", "--config", str(cfg_path)]) == 2

    def test_train_without_prepare_exit_2(self, dataset, tmp_path):
        cfg_path = tmp_path / "cli3.cfg"
        cfg_path.write_text(
            CONFIG_TEMPLATE.format(
                records=dataset["records"], noise=dataset["noise"],
                out=tmp_path / "fresh", n_samples=N_SAMPLES,
            )
        )
        assert cli_main(["train", "--config", str(cfg_path)]) == 2

    def test_synth_subcommand(self, tmp_path):
        out = tmp_path / "synthdata"
        assert cli_main([
            "synth", "--out", str(out), "--n-samples", "16384", "--noise-samples", "16000",
        ]) == 0
        assert (out / "records" / "100.hea").exists()
        assert (out / "noise" / "ma.dat").exists()
        emitted = pipeline.load_config(out / "synthetic.cfg")
        assert emitted.max_samples == 16384
        assert emitted.train_records == ("100", "102")

    def test_fetch_verifies_missing_data(self, tmp_path):
        cfg_path = tmp_path / "cli4.cfg"
        cfg_path.write_text(
            CONFIG_TEMPLATE.format(
                records=tmp_path / "norecords", noise=tmp_path / "nonoise",
                out=tmp_path / "out", n_samples=N_SAMPLES,
            )
        )
        assert cli_main(["fetch", "--config", str(cfg_path)]) == 2
