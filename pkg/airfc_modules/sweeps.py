"""
AirFC Simulator - Experiment Sweeps
===================================

Config-driven runners behind the CLI subcommands:
- run_emulate_sweep:  alternating optimization per (grid point, seed) against a target layer
- run_train_sweep:    every requested training scheme per (grid point, seed)
- run_rank_check:     rank(H) against the stacked-channel bound across K and L grids

Grid points are dispatched to a thread pool. Each task owns a generator
seeded by SeedSequence([master_seed, point_index, seed]); channel draws are
keyed by (master_seed, seed), so every grid point of a seed sees the same
realization whenever the dimensions agree. Results are collected in
submission order by the calling thread, the single writer.
"""

import math
import os
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from airfc_modules import airnn, training
from airfc_modules.airnn import NetState, TrainConfig
from airfc_modules.channel import ChannelRealization, SystemConfig, random_phases, rank_bound_check, sample_channel
from airfc_modules.data import Dataset, load_split, subset
from airfc_modules.emulator import TargetLayer, run_algorithm1
from shared_modules.config import CACHE_DIR
from shared_modules.errors import AirFCError
from shared_modules.io_inputs import ExperimentConfig, data_root, point_system
from shared_modules.performance_logger import RunLogger
from shared_modules.reports import (
    EMULATE_VALUE_COLUMNS,
    TRAIN_VALUE_COLUMNS,
    aggregate_rows,
    emulate_trend_flags,
    rank_summary,
    train_trend_flags,
)
from shared_modules.utils import config_hash, ensure_dir, rician_k_to_linear


SCHEME_SETTINGS = {
    "trainable_unit": {"mode": "centralized", "phase_mode": "unit", "middle": "ota"},
    "trainable_relaxed": {"mode": "centralized", "phase_mode": "relaxed", "middle": "ota"},
    "baseline1": {"mode": "centralized", "phase_mode": "fixed_los", "middle": "ota"},
    "baseline2": {"mode": "distributed", "phase_mode": "fixed_los", "middle": "ota"},
    "digital": {"mode": "centralized", "phase_mode": "unit", "middle": "digital"},
}


@dataclass
class SweepResult:
    detail: pd.DataFrame
    aggregate: pd.DataFrame
    flags: List[str] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)

    def table(self) -> pd.DataFrame:
        return pd.concat([self.detail, self.aggregate], ignore_index=True, sort=False)


def point_rng(cfg: ExperimentConfig, point_index: int, seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.master_seed, point_index, seed]))


def _tasks(cfg: ExperimentConfig) -> List[Tuple[int, object, int]]:
    return [(i, value, seed) for i, value in enumerate(cfg.sweep.values) for seed in cfg.seeds]


def _dispatch(tasks: List[Tuple], worker: Callable[..., List[Dict]], threads: int, command: str,
              logger: Optional[RunLogger]) -> Tuple[List[Dict], List[str]]:
    """
    Run worker(*task) on a thread pool; rows come back in task order.
    A failing task is logged and reported in the error list, the others still run.
    """
    rows: List[Dict] = []
    errors: List[str] = []

    def timed(task):
        start = datetime.now()
        try:
            out = worker(*task)
            return out, start, datetime.now(), None
        except (AirFCError, ValueError, ArithmeticError, OSError) as e:
            return [], start, datetime.now(), f"{type(e).__name__}: {e}\n{traceback.format_exc(limit=3)}"

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = [pool.submit(timed, task) for task in tasks]
        for task, fut in zip(tasks, futures):
            out, start, end, err = fut.result()
            _, value, seed = task[:3]
            scheme = task[3] if len(task) > 3 else None
            if err is None:
                rows.extend(out)
                status = "ok"
            else:
                errors.append(f"point {value}, seed {seed}: {err}")
                status = "failed"
            if logger is not None:
                iterations = sum(int(r.get("iterations", 0) or 0) for r in out) or None
                logger.track_point(command, value, seed, start, end, status, scheme=scheme,
                                   iterations=iterations, error=err)
            marker = "✓" if status == "ok" else "✗"
            label = f" {scheme}" if scheme else ""
            print(f"  {marker} {str(value):>10}  seed {seed:<4}{label}  ({(end - start).total_seconds():.2f}s)")
    return rows, errors


# =========================
# TARGET LAYER
# =========================

def random_target(n: int, master_seed: int, seed: int) -> TargetLayer:
    """CN(0, 1/N) weights and bias, shared by all grid points of a seed."""
    rng = np.random.default_rng([master_seed, seed, 7])
    scale = math.sqrt(1.0 / (2.0 * n))
    w = scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    b = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return TargetLayer(W=w, b=b)


def load_datasets(cfg: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """Desk-scale train/test subsets (first-k after a shuffle seeded by master_seed)."""
    root = data_root()
    spec = cfg.train
    train = subset(load_split(root, spec.dataset, "train"), spec.train_count, cfg.master_seed)
    test = subset(load_split(root, spec.dataset, "test"), spec.test_count, cfg.master_seed + 1)
    return train, test


def train_target_network(cfg: ExperimentConfig, train: Dataset, test: Optional[Dataset],
                         checkpoint: Optional[str] = None) -> NetState:
    """
    Digital target NN, trained once and checkpointed; an existing checkpoint
    at the same path is reused.
    """
    if checkpoint and os.path.exists(checkpoint):
        print(f"  ✓ Reusing target checkpoint: {checkpoint}")
        return airnn.load_checkpoint(checkpoint)

    spec = cfg.train
    tcfg = TrainConfig(
        lambda_p=spec.lambda_p, lambda_ris=spec.lambda_ris, epochs=cfg.emulate.target_epochs,
        batch_size=spec.batch_size, learning_rate=spec.learning_rate, middle="digital", seed=cfg.master_seed,
    )
    sys_cfg = point_system(cfg, None)
    result = training.train_centralized(tcfg, sys_cfg, None, train, test, max_batches=spec.max_batches, verbose=True)
    if checkpoint:
        ensure_dir(os.path.dirname(checkpoint) or ".")
        airnn.save_checkpoint(result.state, checkpoint)
        print(f"  ✓ Target checkpoint written: {checkpoint}")
    return result.state


def default_target_checkpoint(cfg: ExperimentConfig) -> str:
    key = config_hash({
        "dataset": cfg.train.dataset,
        "train_count": cfg.train.train_count,
        "epochs": cfg.emulate.target_epochs,
        "batch_size": cfg.train.batch_size,
        "learning_rate": cfg.train.learning_rate,
        "max_batches": cfg.train.max_batches,
        "master_seed": cfg.master_seed,
    })
    return os.path.join(CACHE_DIR, "targets", f"{cfg.train.dataset}_{key}.blob")


# =========================
# EMULATION SWEEP
# =========================

def run_emulate_sweep(cfg: ExperimentConfig, threads: int = 1, logger: Optional[RunLogger] = None,
                      target_state: Optional[NetState] = None, test: Optional[Dataset] = None) -> SweepResult:
    """
    Detail rows {sweep_value, seed, weight_error, bias_error, sum_error,
    iterations} (+ accuracy) per grid point x seed, then one aggregate row per
    grid point.
    """
    chash = config_hash(cfg.model_dump(mode="json"))
    variable = cfg.sweep.variable
    spec = cfg.emulate

    if spec.target == "trained" and target_state is None:
        train, test = load_datasets(cfg)
        target_state = train_target_network(cfg, train, test, spec.target_checkpoint or default_target_checkpoint(cfg))
    trained_target = airnn.extract_target_layer(target_state) if target_state is not None else None

    def worker(point_index: int, value, seed: int) -> List[Dict]:
        sys_cfg = point_system(cfg, value)
        ch = sample_channel(sys_cfg, index=seed)
        target = trained_target if trained_target is not None else random_target(sys_cfg.n, cfg.master_seed, seed)
        _, report = run_algorithm1(sys_cfg, ch, target, mode=spec.phase_mode, rng=point_rng(cfg, point_index, seed))
        row = {"row_type": "detail", "sweep_variable": variable, "sweep_value": value, "seed": seed}
        row.update(report.as_record())
        row["converged"] = report.converged
        if spec.accuracy:
            row["accuracy"] = training.evaluate_emulated_accuracy(
                target_state, replace(sys_cfg, seed=seed), test, mode=spec.phase_mode,
                max_batches=spec.accuracy_batches,
            )
        row["config_hash"] = chash
        return [row]

    rows, errors = _dispatch(_tasks(cfg), worker, threads, "emulate", logger)
    detail = pd.DataFrame(rows)
    value_columns = EMULATE_VALUE_COLUMNS + (["accuracy"] if spec.accuracy else [])
    aggregate = aggregate_rows(detail, value_columns, ["sweep_value"]) if not detail.empty else pd.DataFrame()
    if not aggregate.empty:
        aggregate["sweep_variable"] = variable
        aggregate["config_hash"] = chash
    num_ris = cfg.system.l if variable != "l" else None
    flags = emulate_trend_flags(aggregate, variable, num_ris=num_ris)
    return SweepResult(detail=detail, aggregate=aggregate, flags=flags, errors=errors)


# =========================
# TRAINING SWEEP
# =========================

def scheme_config(cfg: ExperimentConfig, scheme: str, seed: int) -> TrainConfig:
    spec = cfg.train
    return TrainConfig(
        lambda_p=spec.lambda_p, lambda_ris=spec.lambda_ris, epochs=spec.epochs, batch_size=spec.batch_size,
        learning_rate=spec.learning_rate, seed=seed, **SCHEME_SETTINGS[scheme],
    )


def run_train_sweep(cfg: ExperimentConfig, threads: int = 1, logger: Optional[RunLogger] = None,
                    out_dir: Optional[str] = None,
                    datasets: Optional[Tuple[Dataset, Dataset]] = None) -> SweepResult:
    """Rows {sweep_value, seed, scheme, final_accuracy, trace_path} per point x seed x scheme."""
    chash = config_hash(cfg.model_dump(mode="json"))
    variable = cfg.sweep.variable
    train, test = datasets if datasets is not None else load_datasets(cfg)
    trace_dir = os.path.join(out_dir, "traces") if out_dir else None
    if trace_dir:
        ensure_dir(trace_dir)

    tasks = [(i, value, seed, scheme) for i, value, seed in _tasks(cfg) for scheme in cfg.train.schemes]

    def worker(point_index: int, value, seed: int, scheme: str) -> List[Dict]:
        sys_cfg = point_system(cfg, value)
        ch = sample_channel(sys_cfg, index=seed)
        tcfg = scheme_config(cfg, scheme, seed)
        trace_path = None
        if trace_dir:
            trace_path = os.path.join(trace_dir, f"{scheme}_{variable}={value}_seed{seed}.csv")
        run = training.train_distributed if tcfg.mode == "distributed" else training.train_centralized
        result = run(tcfg, sys_cfg, ch if tcfg.middle == "ota" else None, train, test,
                     trace_path=trace_path, max_batches=cfg.train.max_batches)
        return [{
            "row_type": "detail",
            "sweep_variable": variable,
            "sweep_value": value,
            "seed": seed,
            "scheme": scheme,
            "final_accuracy": result.final_accuracy,
            "trace_path": trace_path,
            "config_hash": chash,
        }]

    rows, errors = _dispatch(tasks, worker, threads, "train", logger)
    detail = pd.DataFrame(rows)
    aggregate = aggregate_rows(detail, TRAIN_VALUE_COLUMNS, ["sweep_value", "scheme"]) if not detail.empty else pd.DataFrame()
    if not aggregate.empty:
        aggregate["sweep_variable"] = variable
        aggregate["config_hash"] = chash
    return SweepResult(detail=detail, aggregate=aggregate, flags=train_trend_flags(aggregate, variable), errors=errors)


# =========================
# RANK CHECK
# =========================

def run_rank_check(cfg: ExperimentConfig) -> Dict:
    """
    Ranks of H with random phases over the K grid x L grid. Pure LoS is
    expected to give rank min(L, N) exactly; every draw must satisfy
    rank(H) <= min(rank(Hhat stacked), rank(Hbar stacked), N).
    """
    spec = cfg.rank_check
    records: List[Dict] = []
    for k in spec.k_values:
        k_lin = rician_k_to_linear(k)
        for l in spec.l_values:
            sys_cfg = point_system(cfg, None, k_override=k, l_override=l)
            expected = min(l, sys_cfg.n) if math.isinf(k_lin) else None
            for draw in range(spec.draws):
                ch = sample_channel(sys_cfg, index=draw)
                phases = random_phases(ch.ris_elements, np.random.default_rng([cfg.master_seed, draw, 5]))
                rep = rank_bound_check(ch, phases)
                records.append({
                    "k": k, "l": l, "draw": draw,
                    "rank_h": rep.rank_h, "bound": rep.bound,
                    "satisfied": rep.satisfied, "expected": expected,
                })
    report = rank_summary(records)
    report["config_hash"] = config_hash(cfg.model_dump(mode="json"))
    report["n"] = cfg.system.n
    report["m"] = cfg.system.m
    return report


def channel_summary(ch: ChannelRealization, sys_cfg: SystemConfig) -> Dict:
    """Header summary written next to a dumped channel blob."""
    return {
        "n": ch.n,
        "ris_elements": list(ch.ris_elements),
        "k": "inf" if math.isinf(ch.k) else ch.k,
        "index": ch.index,
        "p_max": sys_cfg.p_max,
        "sigma2": sys_cfg.sigma2,
        "seed": sys_cfg.seed,
    }
