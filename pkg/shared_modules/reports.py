"""
AirFC Simulator - Reports & Trend Checks
========================================
Helpers that turn per-run detail rows into plot-ready aggregates and flag
results that go against the expected trends.

This module produces:
- Aggregate rows (mean / std per sweep point, and per scheme for training).
- Trend flags (warnings, never failures) for emulation and training sweeps.
- The rank-check JSON summary.

Purpose: Keep all "what does the sweep say" logic in one place so the CLI and
the acceptance tests reach the same conclusions from the same rows.
"""

import math
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd


EMULATE_VALUE_COLUMNS = ["weight_error", "bias_error", "sum_error", "iterations"]
TRAIN_VALUE_COLUMNS = ["final_accuracy"]

# Expected direction of mean sum error as the sweep variable grows.
EMULATE_EXPECTED = {
    "p_max_db": "decreasing",
    "m": "decreasing",
    "k_db": "increasing",
    "l": "decreasing",
}
# Expected direction of mean accuracy as the sweep variable grows.
TRAIN_EXPECTED = {
    "p_max_db": "increasing",
    "m": "increasing",
}
SCHEME_ORDER = ["digital", "trainable_relaxed", "trainable_unit", "baseline1"]


# =========================
# SORTING
# =========================

def sweep_sort_key(value) -> float:
    """Numeric order for sweep values; 'rayleigh' = -inf dB, 'los' = +inf dB."""
    if isinstance(value, str):
        key = value.strip().lower()
        if key == "rayleigh":
            return -math.inf
        if key == "los":
            return math.inf
        return float(key)
    return float(value)


# =========================
# AGGREGATES
# =========================

def aggregate_rows(detail: pd.DataFrame, value_columns: Sequence[str], group_columns: Sequence[str]) -> pd.DataFrame:
    """
    One aggregate row per group: mean in the value column itself, standard
    deviation (ddof=0) in '<column>_std', and the number of seeds in 'n_seeds'.
    """
    if detail.empty:
        return pd.DataFrame(columns=list(group_columns) + ["row_type", "n_seeds"])
    rows: List[Dict] = []
    for keys, group in detail.groupby(list(group_columns), sort=False, dropna=False):
        if not isinstance(keys, tuple):
            keys = (keys,)
        row = dict(zip(group_columns, keys))
        row["row_type"] = "aggregate"
        row["n_seeds"] = int(group["seed"].nunique())
        for col in value_columns:
            values = pd.to_numeric(group[col], errors="coerce")
            row[col] = float(values.mean())
            row[f"{col}_std"] = float(values.std(ddof=0))
        rows.append(row)
    return pd.DataFrame(rows)


def combined_table(detail: pd.DataFrame, aggregate: pd.DataFrame) -> pd.DataFrame:
    """Detail rows followed by aggregate rows (the CSV layout)."""
    return pd.concat([detail, aggregate], ignore_index=True, sort=False)


# =========================
# TREND FLAGS
# =========================

def _direction_flags(series: pd.Series, expected: str, label: str) -> List[str]:
    """Compare consecutive means (series indexed by sweep value, already sorted)."""
    flags = []
    values = list(series.items())
    for (x0, y0), (x1, y1) in zip(values, values[1:]):
        if expected == "decreasing" and y1 > y0:
            flags.append(f"{label}: expected non-increasing, got {y0:.6g} at {x0} -> {y1:.6g} at {x1}")
        if expected == "increasing" and y1 < y0:
            flags.append(f"{label}: expected non-decreasing, got {y0:.6g} at {x0} -> {y1:.6g} at {x1}")
    return flags


def _sorted_means(aggregate: pd.DataFrame, column: str) -> pd.Series:
    ordered = aggregate.assign(_key=aggregate["sweep_value"].map(sweep_sort_key)).sort_values("_key")
    return pd.Series(ordered[column].to_numpy(), index=ordered["sweep_value"].to_numpy())


def emulate_trend_flags(aggregate: pd.DataFrame, variable: str, num_ris: Optional[int] = None) -> List[str]:
    """Mean sum error vs the sweep variable (increase with K is only expected for L = 1)."""
    expected = EMULATE_EXPECTED.get(variable)
    if expected is None or aggregate.empty:
        return []
    if variable == "k_db" and num_ris not in (None, 1):
        return []
    return _direction_flags(_sorted_means(aggregate, "sum_error"), expected, f"sum_error vs {variable}")


def train_trend_flags(aggregate: pd.DataFrame, variable: str) -> List[str]:
    """Scheme ordering at every point, plus accuracy vs P_max / M per scheme."""
    flags: List[str] = []
    if aggregate.empty:
        return flags

    for value, group in aggregate.groupby("sweep_value", sort=False):
        acc = dict(zip(group["scheme"], group["final_accuracy"]))
        present = [s for s in SCHEME_ORDER if s in acc]
        for better, worse in zip(present, present[1:]):
            if acc[better] < acc[worse]:
                flags.append(
                    f"scheme order at {variable}={value}: {better} ({acc[better]:.4f}) < {worse} ({acc[worse]:.4f})"
                )
        if "digital" in acc and acc["digital"] < max(acc.values()):
            flags.append(f"digital upper bound not maximal at {variable}={value}")

    expected = TRAIN_EXPECTED.get(variable)
    if expected is not None:
        for scheme, group in aggregate.groupby("scheme", sort=False):
            flags += _direction_flags(_sorted_means(group, "final_accuracy"), expected,
                                      f"{scheme} accuracy vs {variable}")

    if {"baseline1", "baseline2"} <= set(aggregate["scheme"]) and variable == "p_max_db":
        b1 = _sorted_means(aggregate[aggregate["scheme"] == "baseline1"], "final_accuracy")
        b2 = _sorted_means(aggregate[aggregate["scheme"] == "baseline2"], "final_accuracy")
        gap = (b1 - b2).abs()
        flags += _direction_flags(gap, "decreasing", "baseline1-baseline2 gap vs p_max_db")
    return flags


# =========================
# RANK CHECK SUMMARY
# =========================

def rank_summary(records: List[Dict]) -> Dict:
    """
    Summarize rank-check records ({k, l, draw, rank_h, bound, satisfied, expected}).
    `expected` is the pure-LoS prediction min(L, N) (None otherwise).
    """
    groups: Dict = {}
    for rec in records:
        key = (str(rec["k"]), int(rec["l"]))
        groups.setdefault(key, []).append(rec)

    cases = []
    for (k, l), recs in groups.items():
        ranks = np.array([r["rank_h"] for r in recs])
        expected = recs[0].get("expected")
        cases.append({
            "k": k,
            "l": l,
            "draws": len(recs),
            "rank_min": int(ranks.min()),
            "rank_max": int(ranks.max()),
            "rank_counts": {str(int(v)): int(c) for v, c in zip(*np.unique(ranks, return_counts=True))},
            "bound_satisfied_rate": float(np.mean([r["satisfied"] for r in recs])),
            "expected_rank": expected,
            "expected_rank_rate": float(np.mean(ranks == expected)) if expected is not None else None,
        })

    total = len(records)
    satisfied = sum(1 for r in records if r["satisfied"])
    return {
        "cases": cases,
        "total_draws": total,
        "bound_satisfied_rate": satisfied / total if total else 1.0,
    }
