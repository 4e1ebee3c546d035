"""Pipeline configuration and the prepare/train/eval/report/fetch drivers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import beats as beats_mod
from . import evalkit, ingest, noisemix, sigproc
from .errors import ConfigError, DataError
from .tiramisu import (
    ModelConfig,
    TrainingConfig,
    build_model,
    load_checkpoint,
    tiny_config,
)
from .tiramisu import train as train_model

NOISE_NAMES = ("em", "ma", "bw")
DEFAULT_EVAL_SNRS = (0.0, -6.0, -12.0, -18.0, -24.0, -30.0)


@dataclass
class PipelineConfig:
    records_root: Path
    noise_root: Path
    output_root: Path
    train_records: tuple[str, ...]
    test_records: tuple[str, ...]
    dataset_labels: dict[str, str] = field(default_factory=dict)
    channel: int | str = 0
    csv_fs: float = 360.0
    max_samples: int = ingest.DEFAULT_MAX_SAMPLES
    mix_weights: tuple[float, float, float] = noisemix.DEFAULT_WEIGHTS
    mix_seed: int = 1234
    snr_ladder: tuple[float, ...] = noisemix.SNR_LADDER_DB
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    train_stride: int = 1024
    eval_snr_set: tuple[float, ...] = DEFAULT_EVAL_SNRS
    eval_stride: int = 1024
    eval_batch: int = 32
    deterministic: bool = False
    threads: int = 0

    def __post_init__(self):
        overlap = set(self.train_records) & set(self.test_records)
        if overlap:
            raise ConfigError(f"train and test record sets overlap: {sorted(overlap)}")
        if not self.train_records and not self.test_records:
            raise ConfigError("no records configured")

    def dataset_of(self, record: str) -> str:
        return self.dataset_labels.get(record, "default")


def _parse_list(value: str) -> list[str]:
    return [tok for tok in value.replace(",", " ").split() if tok]


def _parse_floats(value: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in _parse_list(value))
    except ValueError:
        raise ConfigError(f"expected a list of numbers, got {value!r}") from None


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


_MODEL_INT_KEYS = {
    "bottleneck_layers", "growth_rate", "initial_filters", "kernel_size",
    "pool_size", "tu_stride", "window_len",
}
_MODEL_FLOAT_KEYS = {"dropout_p", "l2_factor", "bn_eps", "bn_momentum"}
_TRAIN_INT_KEYS = {"batch_size", "epochs", "seed"}
_TRAIN_FLOAT_KEYS = {"learning_rate", "val_fraction"}


def parse_config_text(text: str, base_dir: Path) -> PipelineConfig:
    """Parse the flat ``section.key = value`` configuration format."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {stripped!r}")
        key, value = stripped.split("=", 1)
        raw[key.strip()] = value.strip()

    def path_of(key: str, default: str | None = None) -> Path:
        if key not in raw and default is None:
            raise ConfigError(f"config is missing required key {key!r}")
        p = Path(raw.pop(key, default))
        return p if p.is_absolute() else base_dir / p

    records_root = path_of("data.records_root")
    noise_root = path_of("data.noise_root")
    output_root = path_of("data.output_root", "out")

    train_records = tuple(_parse_list(raw.pop("records.train", "")))
    test_records = tuple(_parse_list(raw.pop("records.test", "")))

    dataset_labels = {}
    for key in [k for k in raw if k.startswith("records.dataset.")]:
        dataset_labels[key.split(".", 2)[2]] = raw.pop(key)

    channel: int | str = raw.pop("records.channel", "0")
    channel = int(channel) if channel.lstrip("-").isdigit() else channel

    model_kwargs: dict = {}
    for key in [k for k in raw if k.startswith("model.")]:
        name, value = key.split(".", 1)[1], raw.pop(key)
        if name in ("down_block_layers", "up_block_layers"):
            model_kwargs[name] = tuple(int(v) for v in _parse_list(value))
        elif name in _MODEL_INT_KEYS:
            model_kwargs[name] = int(value)
        elif name in _MODEL_FLOAT_KEYS:
            model_kwargs[name] = float(value)
        elif name == "dtype":
            model_kwargs[name] = value
        else:
            raise ConfigError(f"unknown config key 'model.{name}'")

    train_kwargs: dict = {}
    train_stride = int(raw.pop("train.stride", "1024"))
    for key in [k for k in raw if k.startswith("train.")]:
        name, value = key.split(".", 1)[1], raw.pop(key)
        if name in _TRAIN_INT_KEYS:
            train_kwargs[name] = int(value)
        elif name in _TRAIN_FLOAT_KEYS:
            train_kwargs[name] = float(value)
        elif name == "snr_set":
            train_kwargs["train_snr_set"] = _parse_floats(value)
        else:
            raise ConfigError(f"unknown config key 'train.{name}'")

    try:
        config = PipelineConfig(
            records_root=records_root,
            noise_root=noise_root,
            output_root=output_root,
            train_records=train_records,
            test_records=test_records,
            dataset_labels=dataset_labels,
            channel=channel,
            csv_fs=float(raw.pop("data.csv_fs", "360")),
            max_samples=int(raw.pop("data.max_samples", str(ingest.DEFAULT_MAX_SAMPLES))),
            mix_weights=tuple(_parse_floats(raw.pop("mix.weights", "0.35 0.50 0.15"))),
            mix_seed=int(raw.pop("mix.seed", "1234")),
            snr_ladder=_parse_floats(
                raw.pop("mix.snr_ladder", " ".join(str(s) for s in noisemix.SNR_LADDER_DB))
            ),
            model=ModelConfig(**model_kwargs),
            training=TrainingConfig(**train_kwargs),
            train_stride=train_stride,
            eval_snr_set=_parse_floats(raw.pop("eval.snr_set", "0 -6 -12 -18 -24 -30")),
            eval_stride=int(raw.pop("eval.stride", "1024")),
            eval_batch=int(raw.pop("eval.batch", "32")),
            deterministic=_parse_bool(raw.pop("run.deterministic", "false")),
            threads=int(raw.pop("run.threads", "0")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    if raw:
        raise ConfigError(f"unknown config keys: {sorted(raw)}")
    return config


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), base_dir=path.parent.resolve())


def apply_smoke(config: PipelineConfig) -> PipelineConfig:
    """CI preset: narrow model, short window, 3 epochs, 0 dB only."""
    config = replace(config, model=tiny_config(dtype=config.model.dtype))
    config = replace(
        config,
        training=config.training.with_overrides(epochs=3, train_snr_set=(0.0,)),
        train_stride=min(config.train_stride, config.model.window_len),
        eval_stride=min(config.eval_stride, config.model.window_len // 2),
    )
    return config


def render_config(config: PipelineConfig) -> str:
    """Resolved configuration in the input format (copied per run for provenance)."""
    lines = [
        f"data.records_root = {config.records_root}",
        f"data.noise_root = {config.noise_root}",
        f"data.output_root = {config.output_root}",
        f"data.csv_fs = {config.csv_fs:g}",
        f"data.max_samples = {config.max_samples}",
        f"records.train = {' '.join(config.train_records)}",
        f"records.test = {' '.join(config.test_records)}",
        f"records.channel = {config.channel}",
    ]
    for record in sorted(config.dataset_labels):
        lines.append(f"records.dataset.{record} = {config.dataset_labels[record]}")
    lines += [
        f"mix.weights = {' '.join(f'{w:g}' for w in config.mix_weights)}",
        f"mix.seed = {config.mix_seed}",
        f"mix.snr_ladder = {' '.join(f'{s:g}' for s in config.snr_ladder)}",
    ]
    for key, value in sorted(config.model.to_dict().items()):
        if isinstance(value, list):
            value = " ".join(str(v) for v in value)
        lines.append(f"model.{key} = {value}")
    tdict = config.training.to_dict()
    lines += [
        f"train.learning_rate = {tdict['learning_rate']:g}",
        f"train.batch_size = {tdict['batch_size']}",
        f"train.epochs = {tdict['epochs']}",
        f"train.seed = {tdict['seed']}",
        f"train.snr_set = {' '.join(f'{s:g}' for s in tdict['train_snr_set'])}",
        f"train.val_fraction = {tdict['val_fraction']:g}",
        f"train.stride = {config.train_stride}",
        f"eval.snr_set = {' '.join(f'{s:g}' for s in config.eval_snr_set)}",
        f"eval.stride = {config.eval_stride}",
        f"eval.batch = {config.eval_batch}",
        f"run.deterministic = {'true' if config.deterministic else 'false'}",
        f"run.threads = {config.threads}",
    ]
    return "\n".join(lines) + "\n"


def _write_provenance(config: PipelineConfig, command: str) -> None:
    config.output_root.mkdir(parents=True, exist_ok=True)
    (config.output_root / f"config_{command}.resolved.cfg").write_text(render_config(config))


def _load_record(config: PipelineConfig, name: str) -> ingest.EcgRecord:
    """WFDB by preference, CSV fallback otherwise."""
    hea = config.records_root / f"{name}.hea"
    if hea.exists():
        return ingest.read_record(
            config.records_root, name, channel=config.channel, max_samples=config.max_samples
        )
    csv_path = config.records_root / f"{name}.csv"
    if csv_path.exists():
        beats_path = config.records_root / f"{name}.beats"
        return ingest.read_csv_record(
            csv_path,
            beats_path if beats_path.exists() else None,
            fs=config.csv_fs,
            name=name,
            max_samples=config.max_samples,
        )
    raise DataError(f"record {name!r} not found under {config.records_root} (no .hea or .csv)")


def _record_at_360(config: PipelineConfig, name: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """(clean mV at 360 Hz truncated, beat indices at 360 Hz, ingest warnings)."""
    record = _load_record(config, name)
    signal = record.signal
    beats = record.annotations.beat_samples
    if record.fs != sigproc.TARGET_FS:
        signal = sigproc.resample_to_360(signal, record.fs)
        beats = np.round(beats * (sigproc.TARGET_FS / record.fs)).astype(np.int64)
    n = min(signal.size, config.max_samples)
    signal = signal[:n]
    beats = beats[beats < n]
    return signal, beats, record.warnings


def load_noise_bank(config: PipelineConfig) -> noisemix.NoiseBank:
    sources = []
    for noise_name in NOISE_NAMES:
        record = ingest.read_signal(config.noise_root, noise_name)
        samples = record.signal
        if record.fs != sigproc.TARGET_FS:
            samples = sigproc.resample_to_360(samples, record.fs)
        sources.append(samples)
    return noisemix.make_noise_bank(*sources)


def _prepared_dir(config: PipelineConfig) -> Path:
    return config.output_root / "prepared"


def _safe_name(name: str) -> str:
    """Record names may carry a dataset subdirectory ("mitdb/100")."""
    return name.replace("/", "_").replace("\\", "_")


def _variant_file(name: str, snr_db: float) -> str:
    return f"{_safe_name(name)}_snr{snr_db:+g}dB.f32"


def cmd_prepare(config: PipelineConfig) -> Path:
    """Ingest, resample, truncate, generate the SNR ladder, write the manifest."""
    _write_provenance(config, "prepare")
    out = _prepared_dir(config)
    out.mkdir(parents=True, exist_ok=True)

    names = sorted(set(config.train_records) | set(config.test_records))
    if not names:
        raise ConfigError("no records configured")
    bank = load_noise_bank(config)

    manifest: dict = {
        "version": 1,
        "mix": {
            "weights": list(config.mix_weights),
            "seed": config.mix_seed,
            "snr_ladder_db": list(config.snr_ladder),
        },
        "records": {},
    }
    for name in names:
        signal, beat_idx, warnings = _record_at_360(config, name)
        clean_file = f"{_safe_name(name)}_clean.f32"
        noisemix.write_f32(out / clean_file, signal, name=name, fs=sigproc.TARGET_FS)
        beats_file = f"{_safe_name(name)}_beats.csv"
        with open(out / beats_file, "w") as fh:
            fh.write("sample_index\n")
            fh.writelines(f"{int(b)}\n" for b in beat_idx)

        variants = noisemix.build_snr_ladder(
            signal,
            bank,
            seed=config.mix_seed,
            record_name=name,
            weights=config.mix_weights,
            snr_ladder_db=config.snr_ladder,
        )
        entries = []
        for variant in variants:
            fname = _variant_file(name, variant.spec.target_snr_db)
            noisemix.write_f32(
                out / fname,
                variant.samples,
                name=f"{name}@{variant.spec.target_snr_db:+g}dB",
                fs=sigproc.TARGET_FS,
            )
            entries.append(
                {
                    "file": fname,
                    "target_snr_db": variant.spec.target_snr_db,
                    "achieved_snr_db": variant.achieved_snr_db,
                    "gains": list(variant.gains),
                    "weights": list(variant.spec.weights),
                    "seed": variant.spec.seed,
                    "offset": variant.spec.segment_offset,
                }
            )
        manifest["records"][name] = {
            "dataset": config.dataset_of(name),
            "fs": sigproc.TARGET_FS,
            "n_samples": int(signal.size),
            "clean_file": clean_file,
            "beats_file": beats_file,
            "n_beats": int(beat_idx.size),
            "ingest_warnings": warnings,
            "variants": entries,
        }
    manifest_path = out / "manifest.json"
    noisemix.write_manifest(manifest_path, manifest)
    return manifest_path


def _read_beats_csv(path: Path) -> np.ndarray:
    lines = path.read_text().splitlines()[1:]
    return np.asarray([int(v) for v in lines], dtype=np.int64)


def _load_manifest(config: PipelineConfig) -> dict:
    return noisemix.read_manifest(_prepared_dir(config) / "manifest.json")


def _normalized_windows(samples: np.ndarray, window_len: int, stride: int) -> sigproc.WindowSet:
    wset = sigproc.split_windows(samples, window_len, stride)
    normalized = np.empty_like(wset.windows, dtype=np.float64)
    for i, window in enumerate(wset.windows):
        centered = window - window.mean()
        peak = np.max(np.abs(centered))
        normalized[i] = centered / peak if peak > 0 else 0.0
    return sigproc.WindowSet(
        windows=normalized,
        offsets=wset.offsets,
        window_len=wset.window_len,
        stride=wset.stride,
        source_len=wset.source_len,
    )


def build_training_windows(config: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """(noisy, clean) normalized window pairs for the configured train split."""
    manifest = _load_manifest(config)
    prepared = _prepared_dir(config)
    noisy_parts, clean_parts = [], []
    for name in config.train_records:
        if name not in manifest["records"]:
            raise DataError(f"record {name!r} missing from manifest; rerun prepare")
        entry = manifest["records"][name]
        clean, _, _ = noisemix.read_f32(prepared / entry["clean_file"])
        clean_wset = _normalized_windows(clean, config.model.window_len, config.train_stride)
        by_snr = {v["target_snr_db"]: v for v in entry["variants"]}
        for snr in config.training.train_snr_set:
            if snr not in by_snr:
                raise DataError(f"record {name!r} has no {snr:+g} dB variant; rerun prepare")
            noisy, _, _ = noisemix.read_f32(prepared / by_snr[snr]["file"])
            noisy_wset = _normalized_windows(noisy, config.model.window_len, config.train_stride)
            noisy_parts.append(noisy_wset.windows)
            clean_parts.append(clean_wset.windows)
    if not noisy_parts:
        raise DataError("empty training dataset")
    return np.concatenate(noisy_parts), np.concatenate(clean_parts)


def cmd_train(config: PipelineConfig) -> Path:
    _write_provenance(config, "train")
    noisy, clean = build_training_windows(config)
    tcfg = config.training.with_overrides(deterministic=config.deterministic)
    model = build_model(config.model, seed=tcfg.seed)
    train_dir = config.output_root / "train"
    train_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = train_dir / "checkpoint.bin"
    train_model(
        model,
        noisy,
        clean,
        tcfg,
        checkpoint_path=checkpoint_path,
        log_path=train_dir / "loss.csv",
    )
    return checkpoint_path


def denoise_full(model, samples: np.ndarray, stride: int, batch: int = 32) -> np.ndarray:
    """Window, normalize, run the model in inference mode, stitch back."""
    wset = _normalized_windows(samples, model.config.window_len, stride)
    outputs = np.empty_like(wset.windows)
    for start in range(0, wset.windows.shape[0], batch):
        block = wset.windows[start : start + batch]
        outputs[start : start + batch] = model.forward(block, training=False)
    return sigproc.stitch_windows(
        sigproc.WindowSet(
            windows=outputs,
            offsets=wset.offsets,
            window_len=wset.window_len,
            stride=wset.stride,
            source_len=wset.source_len,
        )
    )


def evaluate_record(
    config: PipelineConfig,
    model,
    name: str,
    snr_db: float,
    entry: dict,
    prepared: Path,
) -> tuple[evalkit.RecordResult, evalkit.BlandAltman, beats_mod.PeakList, beats_mod.IbiSeries]:
    by_snr = {v["target_snr_db"]: v for v in entry["variants"]}
    if snr_db not in by_snr:
        raise DataError(f"record {name!r} has no {snr_db:+g} dB variant; rerun prepare")
    noisy, _, fs = noisemix.read_f32(prepared / by_snr[snr_db]["file"])
    beat_idx = _read_beats_csv(prepared / entry["beats_file"])
    truth = ingest.BeatAnnotations(beat_idx, np.ones(beat_idx.size, dtype=np.int16))
    denoised = denoise_full(model, noisy, stride=config.eval_stride, batch=config.eval_batch)
    peaks = beats_mod.detect_peaks(denoised, fs=fs)
    match = beats_mod.match_beats(peaks, truth)
    p_series, o_series = beats_mod.paired_ibis(match, peaks, truth, fs=fs)
    ba = evalkit.bland_altman(p_series, o_series)
    result = evalkit.RecordResult(
        record=name,
        dataset=entry["dataset"],
        snr_db=snr_db,
        rmse_ms=evalkit.rmse_ibi(p_series, o_series),
        pct_error=evalkit.pct_error(p_series, o_series),
        n_ibis=len(o_series),
        mean_diff_ms=ba.mean_diff,
        loa_upper_ms=ba.loa_upper,
        loa_lower_ms=ba.loa_lower,
        pearson_r=evalkit.pearson_r(p_series, o_series),
        matched=len(match.pairs),
        unmatched_estimated=match.unmatched_estimated,
        unmatched_true=match.unmatched_true,
    )
    return result, ba, peaks, p_series


def cmd_eval(config: PipelineConfig, checkpoint_path: str | Path) -> Path:
    _write_provenance(config, "eval")
    model, _ = load_checkpoint(checkpoint_path, expect_config=config.model)

    train_set = set(config.train_records)
    leaked = [r for r in config.test_records if r in train_set]
    if leaked:
        raise ConfigError(f"test records also appear in the train split: {leaked}")
    if not config.test_records:
        raise ConfigError("no test records configured")

    manifest = _load_manifest(config)
    prepared = _prepared_dir(config)
    eval_dir = config.output_root / "eval"
    (eval_dir / "peaks").mkdir(parents=True, exist_ok=True)
    (eval_dir / "ibis").mkdir(parents=True, exist_ok=True)

    results = []
    ba_rows = []
    for name in config.test_records:
        if name not in manifest["records"]:
            raise DataError(f"test record {name!r} missing from manifest; rerun prepare")
        entry = manifest["records"][name]
        for snr_db in config.eval_snr_set:
            result, ba, peaks, p_series = evaluate_record(
                config, model, name, snr_db, entry, prepared
            )
            results.append(result)
            ba_rows.append((name, snr_db, ba))
            tag = f"{_safe_name(name)}_snr{snr_db:+g}dB"
            beats_mod.write_peaks_csv(eval_dir / "peaks" / f"{tag}.csv", peaks)
            beats_mod.write_ibis_csv(eval_dir / "ibis" / f"{tag}.csv", p_series)

    report = evalkit.aggregate_report(results)
    evalkit.write_report_csv(eval_dir / "report.csv", report)
    evalkit.write_report_json(eval_dir / "report.json", report)
    evalkit.write_ba_points_csv(eval_dir / "ba_points.csv", ba_rows)
    evalkit.write_box_data_csv(eval_dir / "box_data.csv", report)
    return eval_dir


def cmd_report(config: PipelineConfig) -> str:
    """Re-aggregate eval output and return a printable summary table."""
    eval_dir = config.output_root / "eval"
    results = evalkit.read_report_csv(eval_dir / "report.csv")
    report = evalkit.aggregate_report(results)
    evalkit.write_report_json(eval_dir / "report.json", report)
    evalkit.write_box_data_csv(eval_dir / "box_data.csv", report)

    lines = ["snr_db  mean_rmse_ms  mean_pct_error  n_records"]
    for snr, stats in report.per_snr.items():
        lines.append(
            f"{snr:>6}  {stats['mean_rmse_ms']:12.3f}  {stats['mean_pct_error']:14.3f}"
            f"  {stats['n_records']:9d}"
        )
    lines.append(
        f"weighted average: rmse {report.overall['weighted_rmse_ms']:.3f} ms, "
        f"%error {report.overall['weighted_pct_error']:.3f}"
    )
    return "\n".join(lines)


# Public archive bases, keyed by the dataset prefix of a record name
# ("mitdb/100" -> mitdb archive). Prefix-less names default to mitdb.
_ARCHIVE_URLS = {
    "mitdb": "https://physionet.org/files/mitdb/1.0.0",
    "edb": "https://physionet.org/files/edb/1.0.0",
    "nstdb": "https://physionet.org/files/nstdb/1.0.0",
}


def _download_record(root: Path, name: str, archive: str, suffixes: list[str]) -> list[str]:
    import urllib.request

    base = _ARCHIVE_URLS.get(archive)
    if base is None:
        return [f"{name}: no known public archive for dataset prefix {archive!r}"]
    problems = []
    basename = name.split("/")[-1]
    for suffix in suffixes:
        target = root / f"{name}{suffix}"
        if target.exists():
            continue
        target.parent.mkdir(parents=True, exist_ok=True)
        url = f"{base}/{basename}{suffix}"
        try:
            with urllib.request.urlopen(url, timeout=60) as response:
                target.write_bytes(response.read())
        except OSError as exc:
            problems.append(f"download failed for {url}: {exc}")
    return problems


def cmd_fetch(config: PipelineConfig, enable_network: bool = False) -> list[str]:
    """Verify dataset presence (and checksums); optionally download what's missing.

    Without ``enable_network`` this never touches the network: it reads each
    configured record and reports problems. Returns the list of problem
    strings (empty = all good). Only WFDB archives are fetchable; CSV-format
    records must be placed manually.
    """
    problems: list[str] = []
    record_names = sorted(set(config.train_records) | set(config.test_records))

    if enable_network:
        for name in record_names:
            if (config.records_root / f"{name}.csv").exists():
                continue  # CSV records are out-of-band
            prefix = name.split("/")[0] if "/" in name else "mitdb"
            problems += _download_record(
                config.records_root, name, prefix, [".hea", ".dat", ".atr"]
            )
        for noise_name in NOISE_NAMES:
            problems += _download_record(config.noise_root, noise_name, "nstdb", [".hea", ".dat"])

    for name in record_names:
        try:
            record = _load_record(config, name)
            problems.extend(f"{name}: {w}" for w in record.warnings)
        except DataError as exc:
            problems.append(f"{name}: {exc}")
    for noise_name in NOISE_NAMES:
        try:
            record = ingest.read_signal(config.noise_root, noise_name)
            problems.extend(f"{noise_name}: {w}" for w in record.warnings)
        except DataError as exc:
            problems.append(f"{noise_name}: {exc}")
    return problems
