"""Command-line entry point: ``run``, ``summarize`` and ``validate``.

Exit codes: 0 on success, 1 for a config or argument error, 2 when every
run of a sweep failed.
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, Preset, load_config
from .experiment import run_experiment, summarize

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED = 0, 1, 2


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsma-uav",
                                     description="Joint UAV placement and RSMA precoding sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep and write CSV traces")
    run.add_argument("config", help="YAML config file")
    run.add_argument("--out", help="output directory (overrides output_dir)")
    run.add_argument("--seeds", type=_seed_list, help="comma-separated seeds, e.g. 0,1,2")
    run.add_argument("--preset", choices=[p.value for p in Preset], help="preset to start from")
    run.add_argument("--jobs", type=_positive, default=1, help="worker processes (default 1)")

    summ = sub.add_parser("summarize", help="report on a finished sweep directory")
    summ.add_argument("directory")

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config")
    val.add_argument("--preset", choices=[p.value for p in Preset])
    return parser


def _load(args):
    config = load_config(args.config, args.preset)
    if getattr(args, "seeds", None):
        if len(set(args.seeds)) != len(args.seeds):
            raise ConfigError("--seeds: seeds must be distinct")
        config = config.model_copy(update={"sweep": config.sweep.model_copy(update={"seeds": args.seeds})})
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "summarize":
        print(summarize(args.directory))
        return EXIT_OK
    try:
        config = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        sw = config.sweep
        n = len(sw.methods) * len(sw.schemes) * len(sw.snr_db) * len(sw.seeds) * sw.monte_carlo_drops
        print(f"{args.config}: ok (preset {config.preset.value}, {n} runs)")
        return EXIT_OK
    result = run_experiment(config, args.out, jobs=args.jobs)
    failed = sum(o.failed for o in result.outcomes)
    print(f"{len(result.outcomes)} runs, {failed} failed; results in {result.out_dir}")
    for o in result.outcomes:
        if o.failed:
            print(f"  {o.spec.file_name(config.sweep.monte_carlo_drops)}: {o.summary['status']}",
                  file=sys.stderr)
    return EXIT_ALL_FAILED if result.all_failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
