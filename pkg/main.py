"""
AirFC Simulator - Experiment Runner
===================================

Primary CLI script for the over-the-air FC-layer experiments.

Purpose:
- Emulate a trained (or random) FC layer with precoder / RIS / combiner designs
  (alternating optimization) across P_max, M, K and L grids
- Train the over-the-air network with every scheme (trainable phases, relaxed
  amplitudes, LoS-fixed baseline, distributed baseline, digital upper bound)
- Check the multi-RIS rank bound
- Dump channel realizations for cross-implementation comparison

Usage:
  python main.py emulate --config input_data/configs/emulate_pmax.json
  python main.py emulate --config ... --seeds 0-19 --threads 4 --excel
  python main.py train --config input_data/configs/train_schemes.json --performance-log
  python main.py rank-check --config input_data/configs/rank_check.json
  python main.py dump-channel --config input_data/configs/emulate_pmax.json --seeds 3
  python main.py --print-schema           # JSON schema of the experiment config

Exit codes: 0 success, 2 configuration error, 3 runtime failure (partial
results are flushed first).
"""

import argparse
import json
import os
import sys
from datetime import datetime as dt
from typing import List, Optional

from airfc_modules.channel import dump_channel, los_aligned_phases, sample_channel
from airfc_modules.sweeps import channel_summary, run_emulate_sweep, run_rank_check, run_train_sweep
from shared_modules.config import DEFAULT_THREADS
from shared_modules.errors import AirFCError, ConfigError
from shared_modules.excel_export import export_to_excel
from shared_modules.io_inputs import (
    experiment_schema,
    load_experiment_config,
    output_dir_for,
    point_system,
    resolved_metadata,
)
from shared_modules.performance_logger import RunLogger
from shared_modules.utils import config_hash, ensure_dir, write_json


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

COMMAND_MODES = {"emulate": "emulate", "train": "train", "rank-check": "rank_check", "dump-channel": None}


def parse_seeds(text: str) -> List[int]:
    """'0,1,5' or '0-19' (inclusive) or a mix: '0-3,10'."""
    seeds: List[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError as e:
        raise ConfigError(f"Cannot parse --seeds {text!r}: {e}") from e
    if not seeds:
        raise ConfigError("--seeds selects no seed")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    # ====================
    # COMMAND LINE SETUP
    # ====================

    parser = argparse.ArgumentParser(
        description="Over-the-air FC-layer simulator: emulation sweeps, training sweeps, rank checks."
    )
    parser.add_argument(
        "--print-schema",
        action="store_true",
        help="Print the JSON schema of the experiment config and exit"
    )
    sub = parser.add_subparsers(dest="command")

    for name, help_text in [
        ("emulate", "Emulation error sweep (alternating optimization)"),
        ("train", "Training sweep over the requested schemes"),
        ("rank-check", "Numerical rank of H vs the stacked-channel bound"),
        ("dump-channel", "Write one channel realization (blob container + JSON header)"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="Experiment config (JSON)")
        p.add_argument("--out", default=None, help="Output directory (default: output_data/<experiment>/)")
        p.add_argument("--seeds", default=None, help="Override seeds, e.g. '0-19' or '0,3,7'")
        p.add_argument("--threads", type=int, default=DEFAULT_THREADS, help="Worker threads for sweep points")
        p.add_argument("--excel", action="store_true", help="Also write a styled review workbook")
        p.add_argument(
            "--performance-log",
            action="store_true",
            help="Enable performance logging (writes to <out>/performance_logs/)"
        )
    return parser


def _banner(title: str) -> None:
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def run(args: argparse.Namespace) -> int:
    # ====================
    # CONFIG LOADING
    # ====================

    phase0_start = dt.now()
    cfg = load_experiment_config(args.config)
    if args.seeds:
        cfg = cfg.model_copy(update={"seeds": parse_seeds(args.seeds)})
    expected_mode = COMMAND_MODES[args.command]
    if expected_mode is not None and cfg.mode != expected_mode:
        raise ConfigError(f"Config mode '{cfg.mode}' does not match subcommand '{args.command}'")
    if args.threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {args.threads}")

    out_dir = output_dir_for(cfg, args.out)
    ensure_dir(out_dir)
    chash = config_hash(cfg.model_dump(mode="json"))
    metadata = resolved_metadata(cfg)
    metadata.update({"config_hash": chash, "command": args.command, "timestamp": phase0_start.isoformat()})

    perf_log_dir = os.path.join(out_dir, "performance_logs")
    perf_logger: Optional[RunLogger] = None
    if args.performance_log:
        ensure_dir(perf_log_dir)
        perf_logger = RunLogger(perf_log_dir)

    _banner("PHASE 0 — CONFIG")
    print(f"  Config:      {args.config}")
    print(f"  Experiment:  {cfg.experiment}  (hash {chash})")
    print(f"  Seeds:       {len(cfg.seeds)}   Threads: {args.threads}")
    if cfg.sweep is not None:
        print(f"  Sweep:       {cfg.sweep.variable} over {cfg.sweep.values}")

    # ====================
    # DUMP CHANNEL / RANK CHECK
    # ====================

    if args.command == "dump-channel":
        _banner("PHASE 1 — CHANNEL DUMP")
        sys_cfg = point_system(cfg, None)
        written = []
        for seed in cfg.seeds:
            ch = sample_channel(sys_cfg, index=seed)
            blob_path = os.path.join(out_dir, f"channel_seed{seed}.blob")
            dump_channel(ch, blob_path, phases=los_aligned_phases(ch))
            header = channel_summary(ch, sys_cfg)
            header["config_hash"] = chash
            write_json(os.path.join(out_dir, f"channel_seed{seed}.json"), header)
            written.append(blob_path)
            print(f"  ✓ {blob_path}")
        _summary(phase0_start, out_dir, written)
        return EXIT_OK

    if args.command == "rank-check":
        _banner("PHASE 1 — RANK CHECK")
        report = run_rank_check(cfg)
        report["metadata"] = metadata
        path = os.path.join(out_dir, "rank_check.json")
        write_json(path, report)
        for case in report["cases"]:
            print(f"  K={case['k']:<10} L={case['l']:<3} ranks {case['rank_min']}..{case['rank_max']}  "
                  f"bound ok {case['bound_satisfied_rate']:.0%}")
        print(f"  Bound satisfied: {report['bound_satisfied_rate']:.2%} of {report['total_draws']} draws")
        _summary(phase0_start, out_dir, [path])
        if perf_logger:
            perf_logger.write_log(args.command, cfg.experiment, chash, args.threads)
        if report["bound_satisfied_rate"] < 1.0:
            print("  ✗ Rank bound violated on some draws")
            return EXIT_RUNTIME
        return EXIT_OK

    # ====================
    # SWEEP
    # ====================

    _banner(f"PHASE 1 — {args.command.upper()} SWEEP")
    if args.command == "emulate":
        result = run_emulate_sweep(cfg, threads=args.threads, logger=perf_logger)
    else:
        result = run_train_sweep(cfg, threads=args.threads, logger=perf_logger, out_dir=out_dir)

    # ====================
    # OUTPUT FILES
    # ====================

    csv_path = os.path.join(out_dir, f"{args.command}_results.csv")
    meta_path = os.path.join(out_dir, f"{args.command}_results.meta.json")
    result.table().to_csv(csv_path, index=False, encoding="utf-8")
    metadata["trend_flags"] = result.flags
    metadata["errors"] = result.errors
    write_json(meta_path, metadata)
    written = [csv_path, meta_path]

    if args.excel:
        excel_path = os.path.join(out_dir, "review.xlsx")
        export_to_excel(excel_path, result.detail, result.aggregate, metadata, result.flags,
                        perf_log_dir=perf_log_dir if perf_logger else None)
        written.append(excel_path)

    _banner("TREND CHECKS")
    if result.flags:
        for flag in result.flags:
            print(f"  ⚠ {flag}")
    else:
        print("  All expected trends hold")

    _summary(phase0_start, out_dir, written)
    if perf_logger:
        perf_logger.write_log(args.command, cfg.experiment, chash, args.threads)

    if result.errors:
        _banner("FAILED POINTS")
        for err in result.errors:
            print(f"  ✗ {err.splitlines()[0]}")
        return EXIT_RUNTIME
    return EXIT_OK


def _summary(start: dt, out_dir: str, files: List[str]) -> None:
    _banner("SESSION SUMMARY")
    print(f"  Elapsed:          {(dt.now() - start).total_seconds():.2f}s")
    print(f"  Output directory: {out_dir}")
    for path in files:
        print(f"    - {path}")
    print("=" * 60 + "\n")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.print_schema:
        print(json.dumps(experiment_schema(), indent=2, sort_keys=True))
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG

    try:
        return run(args)
    except ConfigError as e:
        print(f"\n✗ Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (AirFCError, OSError, ValueError, ArithmeticError) as e:
        print(f"\n✗ Runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        print(f"\n✗ Unexpected failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
