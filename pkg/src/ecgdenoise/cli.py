"""Command-line entry point.

Subcommands: prepare, train, eval, report, fetch, synth. Exit codes:
0 success, 1 usage/config error, 2 data error, 3 numeric failure.

numpy is imported lazily so ``--threads``/``--deterministic`` can pin the
BLAS thread pools before they initialize; a ``run.threads`` value from the
config file is applied later and may not affect pools that already started.
"""

from __future__ import annotations

import argparse
import os
import sys


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        raise SystemExit(self.exit_code_for_usage(message))

    def exit_code_for_usage(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        self.print_usage(sys.stderr)
        return 1


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("--config", required=config_required, help="pipeline config file")
    parser.add_argument("--seed", type=int, default=None, help="override mix and train seeds")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--threads", type=int, default=None, help="pin BLAS/OpenMP threads")
    parser.add_argument(
        "--deterministic", action="store_true",
        help="single-threaded mode with reproducible logs",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ecgdenoise", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest records and generate the SNR ladder")
    _add_common(p)

    p = sub.add_parser("train", help="train the denoiser on the prepared dataset")
    _add_common(p)
    p.add_argument("--smoke", action="store_true", help="reduced model / 3 epochs for CI")

    p = sub.add_parser("eval", help="denoise, detect beats, score against ground truth")
    _add_common(p)
    p.add_argument("--checkpoint", default=None, help="checkpoint path (default out/train/checkpoint.bin)")

    p = sub.add_parser("report", help="re-aggregate eval output and print the summary")
    _add_common(p)

    p = sub.add_parser("fetch", help="verify dataset presence; optionally download")
    _add_common(p)
    p.add_argument("--enable-network", action="store_true",
                   help="allow downloads from the public archive")

    p = sub.add_parser("synth", help="generate the synthetic stand-in dataset")
    p.add_argument("--out", required=True, help="dataset root directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-samples", type=int, default=409600)
    p.add_argument("--noise-samples", type=int, default=300000)

    return parser


def _pin_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    threads = getattr(args, "threads", None)
    deterministic_flag = getattr(args, "deterministic", False)
    if deterministic_flag:
        threads = 1
    if threads is not None:
        _pin_threads(threads)

    from .errors import EcgDenoiseError  # noqa: PLC0415 (after thread pinning)

    try:
        if args.command == "synth":
            from .synth import make_demo_dataset

            paths = make_demo_dataset(
                args.out, seed=args.seed, n_samples=args.n_samples,
                noise_samples=args.noise_samples,
            )
            print(f"records: {paths['records']}")
            print(f"noise:   {paths['noise']}")
            print(f"config:  {paths['config']}")
            return 0

        from dataclasses import replace

        from . import pipeline

        config = pipeline.load_config(args.config)
        if args.out is not None:
            config = replace(config, output_root=__import__("pathlib").Path(args.out))
        if args.seed is not None:
            config = replace(
                config,
                mix_seed=args.seed,
                training=config.training.with_overrides(seed=args.seed),
            )
        if deterministic_flag or config.deterministic:
            config = replace(config, deterministic=True, threads=1)
        elif getattr(args, "threads", None):
            config = replace(config, threads=args.threads)
        if config.threads and threads is None:
            _pin_threads(config.threads)

        if args.command == "prepare":
            manifest = pipeline.cmd_prepare(config)
            print(f"manifest: {manifest}")
        elif args.command == "train":
            if args.smoke:
                config = pipeline.apply_smoke(config)
            checkpoint = pipeline.cmd_train(config)
            print(f"checkpoint: {checkpoint}")
        elif args.command == "eval":
            checkpoint = args.checkpoint or (config.output_root / "train" / "checkpoint.bin")
            eval_dir = pipeline.cmd_eval(config, checkpoint)
            print(f"reports: {eval_dir}")
        elif args.command == "report":
            print(pipeline.cmd_report(config))
        elif args.command == "fetch":
            problems = pipeline.cmd_fetch(config, enable_network=args.enable_network)
            for problem in problems:
                print(problem, file=sys.stderr)
            if any("not found" in p or "failed" in p for p in problems):
                return 2
            print("datasets verified" + (" (with warnings)" if problems else ""))
        return 0
    except EcgDenoiseError as exc:
        print(f"ecgdenoise {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
