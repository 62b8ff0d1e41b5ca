"""
AirFC Simulator - Input Loaders
===============================
Experiment-config loading and validation for the sweep runner.

This module handles:
- Parsing the JSON experiment document into a validated `ExperimentConfig`
  (pydantic; unknown keys rejected, JSON schema published via --print-schema).
- Converting dB-valued fields to linear values exactly once per sweep point.
- Resolving the dataset root and the output folder.

Purpose: Keep every file-format and unit-conversion concern out of the
numeric modules, which only ever see linear `SystemConfig` values.
"""

import json
import math
import os
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from airfc_modules.channel import SystemConfig
from shared_modules.config import (
    DATA_DIR,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_K_DB,
    DEFAULT_L,
    DEFAULT_LAMBDA_P,
    DEFAULT_LAMBDA_RIS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_M,
    DEFAULT_N,
    DEFAULT_P_MAX_DB,
    DEFAULT_SIGMA2,
    DESK_TEST_COUNT,
    DESK_TRAIN_COUNT,
    K_PURE_LOS,
    K_RAYLEIGH,
    OUTPUT_DIR,
)
from shared_modules.errors import ConfigError
from shared_modules.utils import db_to_linear, rician_k_to_linear


KValue = Union[float, Literal["los", "rayleigh"]]
SCHEMES = ("trainable_unit", "trainable_relaxed", "baseline1", "baseline2", "digital")


# =========================
# CONFIG MODEL
# =========================

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemSpec(_Strict):
    n: int = Field(DEFAULT_N, ge=1, description="Antennas per side = FC dimension")
    m: int = Field(DEFAULT_M, ge=1, description="Total RIS elements (split evenly over l surfaces)")
    l: int = Field(DEFAULT_L, ge=1, description="Number of RISs")
    p_max_db: float = Field(DEFAULT_P_MAX_DB, description="Power budget in dB (linear = 10^(x/10))")
    k_db: KValue = Field(DEFAULT_K_DB, description="Rician factor in dB, or 'los' / 'rayleigh'")
    sigma2: float = Field(DEFAULT_SIGMA2, ge=0.0, description="Noise variance (linear)")


class SweepSpec(_Strict):
    variable: Literal["p_max_db", "m", "k_db", "l"]
    values: List[KValue] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_values(self):
        for v in self.values:
            if isinstance(v, str) and self.variable != "k_db":
                raise ValueError(f"Sweep variable {self.variable} takes numbers only, got {v!r}")
            if self.variable in ("m", "l") and (not float(v).is_integer() or float(v) < 1):
                raise ValueError(f"Sweep variable {self.variable} takes positive integers, got {v!r}")
        return self


class EmulateSpec(_Strict):
    phase_mode: Literal["unit", "relaxed"] = "unit"
    target: Literal["trained", "random"] = Field(
        "trained", description="'trained': digital target NN on the dataset; 'random': CN(0,1/N) W and b"
    )
    target_checkpoint: Optional[str] = Field(None, description="Reuse this target-NN checkpoint if it exists")
    target_epochs: int = Field(20, ge=1)
    accuracy: bool = Field(False, description="Also report inference accuracy of the optimized transmission parameters")
    accuracy_batches: Optional[int] = Field(None, ge=1)


class TrainSpec(_Strict):
    schemes: List[Literal["trainable_unit", "trainable_relaxed", "baseline1", "baseline2", "digital"]] = Field(
        default_factory=lambda: list(SCHEMES)
    )
    lambda_p: float = Field(DEFAULT_LAMBDA_P, gt=0)
    lambda_ris: float = Field(DEFAULT_LAMBDA_RIS, gt=0)
    epochs: int = Field(DEFAULT_EPOCHS, ge=1)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=1)
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, gt=0)
    dataset: Literal["mnist", "fashion_mnist"] = "mnist"
    train_count: int = Field(DESK_TRAIN_COUNT, ge=1)
    test_count: int = Field(DESK_TEST_COUNT, ge=1)
    max_batches: Optional[int] = Field(None, ge=1, description="Stop each run after this many batches (smoke runs)")

    @field_validator("schemes")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("At least one training scheme is required")
        return v


class RankSpec(_Strict):
    k_values: List[KValue] = Field(default_factory=lambda: [K_PURE_LOS, 10.0, K_RAYLEIGH], min_length=1)
    l_values: List[int] = Field(default_factory=lambda: [1, 5], min_length=1)
    draws: int = Field(100, ge=1)


class ExperimentConfig(_Strict):
    experiment: str = "default"
    mode: Literal["emulate", "train", "rank_check"]
    system: SystemSpec = Field(default_factory=SystemSpec)
    sweep: Optional[SweepSpec] = None
    emulate: EmulateSpec = Field(default_factory=EmulateSpec)
    train: TrainSpec = Field(default_factory=TrainSpec)
    rank_check: RankSpec = Field(default_factory=RankSpec)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    master_seed: int = 0
    output: Optional[str] = None

    @model_validator(mode="after")
    def _check_mode(self):
        if self.mode in ("emulate", "train") and self.sweep is None:
            raise ValueError(f"mode '{self.mode}' needs a sweep block")
        if self.mode == "train" and self.system.n != DEFAULT_N:
            raise ValueError(f"Training uses the conv front-end, which fixes n = {DEFAULT_N}")
        if self.mode == "emulate" and self.emulate.target == "trained" and self.system.n != DEFAULT_N:
            raise ValueError(f"A trained target layer has n = {DEFAULT_N}; use target 'random' for n = {self.system.n}")
        if self.mode == "emulate" and self.emulate.accuracy and self.emulate.target != "trained":
            raise ValueError("Inference accuracy needs target 'trained'")
        return self


# =========================
# LOADING
# =========================

def parse_experiment_config(obj: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(obj)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config:\n{e}") from e


def load_experiment_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON experiment document (ConfigError on any problem)."""
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    return parse_experiment_config(obj)


def experiment_schema() -> dict:
    return ExperimentConfig.model_json_schema()


# =========================
# RESOLUTION (dB -> linear, exactly once)
# =========================

def point_system(cfg: ExperimentConfig, sweep_value, k_override: Optional[KValue] = None,
                 l_override: Optional[int] = None) -> SystemConfig:
    """
    Linear-unit SystemConfig for one grid point. The channel seed is the
    master seed; realizations are indexed by the run seed, so every grid
    point of a seed sees the same draw whenever dimensions agree.
    """
    spec = cfg.system.model_dump()
    if cfg.sweep is not None and sweep_value is not None:
        spec[cfg.sweep.variable] = sweep_value
    if k_override is not None:
        spec["k_db"] = k_override
    if l_override is not None:
        spec["l"] = l_override
    return SystemConfig(
        n=int(spec["n"]),
        ris_elements=SystemConfig.split_elements(int(spec["m"]), int(spec["l"])),
        p_max=db_to_linear(float(spec["p_max_db"])),
        sigma2=float(spec["sigma2"]),
        k=rician_k_to_linear(spec["k_db"]),
        seed=cfg.master_seed,
    )


def _linear_echo(variable: str, value) -> Union[float, str, None]:
    if variable == "p_max_db":
        return db_to_linear(float(value))
    if variable == "k_db":
        k = rician_k_to_linear(value)
        return "inf" if math.isinf(k) else k
    return None


def resolved_metadata(cfg: ExperimentConfig) -> Dict:
    """Config echo with both dB and linear values (written next to every result file)."""
    sys_spec = cfg.system
    k_lin = rician_k_to_linear(sys_spec.k_db)
    meta = {
        "config": cfg.model_dump(mode="json"),
        "linear": {
            "p_max": db_to_linear(sys_spec.p_max_db),
            "k": "inf" if math.isinf(k_lin) else k_lin,
            "sigma2": sys_spec.sigma2,
        },
        "db_to_linear": "10^(x/10)",
    }
    if cfg.sweep is not None:
        meta["sweep_linear"] = [
            {"value": v, "linear": _linear_echo(cfg.sweep.variable, v)} for v in cfg.sweep.values
        ]
    return meta


def output_dir_for(cfg: ExperimentConfig, override: Optional[str] = None) -> str:
    """--out wins, then the config's `output`, then output_data/<experiment>/."""
    if override:
        return override
    if cfg.output:
        return cfg.output
    return os.path.join(OUTPUT_DIR, cfg.experiment)


def data_root() -> str:
    return DATA_DIR
