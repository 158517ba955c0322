"""Command-line experiment runner.

Subcommands: ``run``, ``sweep-noise``, ``sweep-annotators``, ``verify``.
Exit codes: 0 on success, 1 on any run failure, 2 on a config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, ExperimentConfig, parse_config
from .experiment import (ExperimentError, ResultRecord, annotator_sweep_variants,
                         emit, emit_summary, noise_sweep_variants, run_experiment,
                         run_single)
from .verification import run_verification


def _write_outputs(records: list[ResultRecord], out_dir: Path,
                   summary_name: str | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    emit(records, out_dir / "results.csv", fmt="csv")
    emit(records, out_dir / "results.jsonl", fmt="jsonl")
    if summary_name:
        emit_summary(records, out_dir / summary_name)
    print(f"wrote {len(records)} records to {out_dir}")


def _trace_sink(out_dir: Path):
    def sink(record: ResultRecord, rows: list[dict]) -> None:
        tdir = out_dir / "traces"
        tdir.mkdir(parents=True, exist_ok=True)
        tag = record.tag.replace("=", "-") if record.tag else "run"
        name = f"{tag}_{record.method.replace(':', '-')}_seed{record.seed}.jsonl"
        with open(tdir / name, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    return sink


def _seed_job(args: tuple) -> dict:
    cfg, seed, tag = args
    return run_single(cfg, seed, tag=tag).record.to_dict()


def _run_variants(variants: list[tuple[ExperimentConfig, str]], jobs: int,
                  out_dir: Path, want_traces: bool) -> list[ResultRecord]:
    """Execute (variant, tag) pairs, optionally fanning seeds out to worker
    processes. Records come back in deterministic job order either way."""
    if jobs > 1 and not want_traces:
        work = [(variant, seed, tag) for variant, tag in variants
                for seed in variant.seeds]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            dicts = list(pool.map(_seed_job, work))
        return [ResultRecord.from_dict(d) for d in dicts]
    sink = _trace_sink(out_dir) if want_traces else None
    records: list[ResultRecord] = []
    for variant, tag in variants:
        records.extend(run_experiment(variant, tag=tag, trace_sink=sink))
    return records


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="labelattn",
                                     description="attention-over-label-sets experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment over its seeds")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out", default=None, help="output directory (default: config's)")

    p_noise = sub.add_parser("sweep-noise", help="noise-level sweep")
    p_noise.add_argument("--config", required=True)
    p_noise.add_argument("--levels", required=True,
                         help="comma-separated noise levels, e.g. 0.1,0.3,0.5")
    p_noise.add_argument("--jobs", type=int, default=1)
    p_noise.add_argument("--out", default=None)

    p_ann = sub.add_parser("sweep-annotators", help="annotator-count sweep")
    p_ann.add_argument("--config", required=True)
    p_ann.add_argument("--noise", type=float, default=0.3,
                       help="noise level for the adjustable annotators")
    p_ann.add_argument("--jobs", type=int, default=1)
    p_ann.add_argument("--out", default=None)

    p_verify = sub.add_parser("verify", help="run the numeric oracle suites")
    p_verify.add_argument("--trials", type=int, default=1000)

    args = parser.parse_args(argv)

    if args.command == "verify":
        return 0 if run_verification(trials=args.trials) else 1

    try:
        cfg = parse_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    out_dir = Path(args.out if args.out else cfg.output)
    try:
        if args.command == "run":
            variants = [(cfg, "")]
            summary = None
        elif args.command == "sweep-noise":
            try:
                levels = [float(v) for v in args.levels.split(",") if v.strip()]
                variants = noise_sweep_variants(cfg, levels)
            except ValueError as err:
                print(f"config error: {err}", file=sys.stderr)
                return 2
            summary = "plot_noise.csv"
        else:
            try:
                variants = annotator_sweep_variants(cfg, args.noise)
            except ValueError as err:
                print(f"config error: {err}", file=sys.stderr)
                return 2
            summary = "plot_annotators.csv"
        records = _run_variants(variants, args.jobs, out_dir, cfg.trace)
    except ExperimentError as err:
        print(f"run failure: {err}", file=sys.stderr)
        if err.completed:
            _write_outputs(err.completed, out_dir)
            print(f"preserved {len(err.completed)} completed records", file=sys.stderr)
        return 1
    except Exception as err:  # worker-process failures arrive unwrapped
        print(f"run failure: {err}", file=sys.stderr)
        return 1

    _write_outputs(records, out_dir, summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
