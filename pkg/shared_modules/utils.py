"""
AirFC Simulator - Core Utilities Module
=======================================
Shared helper functions used across the simulator and the experiment CLI.
These handle file operations, dB/linear unit conversion and config hashing.

Purpose: Small, reusable helpers that keep the numeric modules free of
filesystem and formatting concerns.
"""

import hashlib
import json
import math
import os
from typing import Union

from shared_modules.config import K_PURE_LOS, K_RAYLEIGH


# =========================
# FILE SYSTEM HELPERS
# =========================

def ensure_dir(path: str) -> None:
    """Create directory if it doesn't exist.
    Used for output folders like output_data/<experiment>/ or cache_data/targets/."""
    os.makedirs(path, exist_ok=True)


def load_json_if_exists(path: str):
    """Load JSON file if it exists, return None otherwise."""
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_json(path: str, obj) -> None:
    """Pretty-printed JSON with stable key order (reports, metadata)."""
    parent = os.path.dirname(path)
    if parent:
        ensure_dir(parent)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, indent=2, sort_keys=True)


# =========================
# UNIT CONVERSION
# =========================
# Configs carry dB values; computation uses linear values. Convert exactly once.

def db_to_linear(x_db: float) -> float:
    """10^(x/10)."""
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    if x <= 0:
        return -math.inf
    return 10.0 * math.log10(x)


def rician_k_to_linear(k: Union[float, str]) -> float:
    """
    Convert a Rician factor given in dB (or as a sentinel string) to linear scale.

    "los"      -> math.inf  (pure line-of-sight; NLoS term omitted)
    "rayleigh" -> 0.0       (K = -inf dB; LoS term omitted)
    """
    if isinstance(k, str):
        key = k.strip().lower()
        if key == K_PURE_LOS:
            return math.inf
        if key == K_RAYLEIGH:
            return 0.0
        return db_to_linear(float(key))
    return db_to_linear(float(k))


# =========================
# HASHING
# =========================

def config_hash(resolved: dict) -> str:
    """Short, stable hash of a resolved config dict (sorted-key JSON, sha256)."""
    payload = json.dumps(resolved, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]
