import os

import numpy as np
import pandas as pd
import pytest

from airfc_modules import airnn
from airfc_modules.airnn import COMPLEX_FEATURES, TrainConfig, init_state
from airfc_modules.data import Dataset
from airfc_modules.sweeps import (
    SCHEME_SETTINGS,
    default_target_checkpoint,
    point_rng,
    random_target,
    run_emulate_sweep,
    run_rank_check,
    run_train_sweep,
    scheme_config,
    train_target_network,
)
from shared_modules.io_inputs import parse_experiment_config, point_system
from shared_modules.performance_logger import RunLogger


def _emulate_cfg(**overrides):
    doc = {
        "experiment": "small",
        "mode": "emulate",
        "system": {"n": 4, "m": 8, "l": 1, "p_max_db": 0.0, "k_db": 10.0, "sigma2": 1.0},
        "sweep": {"variable": "p_max_db", "values": [-10.0, 0.0, 10.0]},
        "emulate": {"target": "random"},
        "seeds": [0, 1],
    }
    doc.update(overrides)
    return parse_experiment_config(doc)


def _images(count: int, seed: int, split: str) -> Dataset:
    rng = np.random.default_rng(seed)
    return Dataset(images=rng.uniform(0.0, 1.0, size=(count, 28, 28)),
                   labels=rng.integers(0, 10, size=count), split=split)


class TestHelpers:
    def test_random_target_is_keyed_by_seed(self):
        a, b, c = random_target(4, 0, 1), random_target(4, 0, 1), random_target(4, 0, 2)
        np.testing.assert_array_equal(a.W, b.W)
        assert not np.allclose(a.W, c.W)
        assert a.W.shape == (4, 4) and a.b.shape == (4,)

    def test_random_target_variance(self):
        w = random_target(64, 3, 0).W
        assert np.mean(np.abs(w) ** 2) == pytest.approx(1.0 / 64, rel=0.1)

    def test_point_rng_streams_differ(self):
        cfg = _emulate_cfg()
        assert point_rng(cfg, 0, 0).random() != point_rng(cfg, 1, 0).random()
        assert point_rng(cfg, 2, 1).random() == point_rng(cfg, 2, 1).random()

    def test_scheme_settings(self):
        cfg = parse_experiment_config({
            "mode": "train", "system": {"n": COMPLEX_FEATURES},
            "sweep": {"variable": "m", "values": [8]},
        })
        assert scheme_config(cfg, "baseline2", 3).mode == "distributed"
        assert scheme_config(cfg, "digital", 3).middle == "digital"
        assert scheme_config(cfg, "trainable_relaxed", 3).phase_mode == "relaxed"
        assert set(SCHEME_SETTINGS) == {"trainable_unit", "trainable_relaxed", "baseline1", "baseline2", "digital"}

    def test_target_checkpoint_path_tracks_config(self):
        base = {"mode": "emulate", "sweep": {"variable": "m", "values": [8]}}
        a = default_target_checkpoint(parse_experiment_config(base))
        b = default_target_checkpoint(parse_experiment_config({**base, "emulate": {"target_epochs": 3}}))
        assert a != b
        assert a.endswith(".blob")


class TestEmulateSweep:
    def test_rows_and_aggregates(self):
        result = run_emulate_sweep(_emulate_cfg())
        assert len(result.detail) == 6
        assert len(result.aggregate) == 3
        assert len(result.table()) == 9
        assert result.errors == []
        assert set(result.detail["row_type"]) == {"detail"}
        assert (result.detail["sum_error"] >= 0).all()
        assert result.detail["config_hash"].nunique() == 1

    def test_reproducible_across_thread_counts(self):
        cfg = _emulate_cfg()
        serial = run_emulate_sweep(cfg, threads=1)
        pooled = run_emulate_sweep(cfg, threads=3)
        assert list(serial.detail["sweep_value"]) == list(pooled.detail["sweep_value"])
        np.testing.assert_allclose(serial.detail["sum_error"], pooled.detail["sum_error"], rtol=1e-9)

    def test_failed_point_is_reported(self, tmp_path):
        cfg = _emulate_cfg(sweep={"variable": "l", "values": [1, 20]}, seeds=[0])
        logger = RunLogger(str(tmp_path))
        result = run_emulate_sweep(cfg, logger=logger)
        assert len(result.detail) == 1
        assert len(result.errors) == 1
        assert "ConfigError" in result.errors[0]
        statuses = pd.read_json(tmp_path / "log_points.jsonl", lines=True)["status"].tolist()
        assert statuses == ["ok", "failed"]

    def test_trained_target_with_accuracy(self):
        cfg = parse_experiment_config({
            "mode": "emulate",
            "system": {"n": COMPLEX_FEATURES, "m": 8, "p_max_db": 0.0, "sigma2": 1.0},
            "sweep": {"variable": "m", "values": [8]},
            "emulate": {"target": "trained", "accuracy": True, "accuracy_batches": 1},
        })
        state = init_state(point_system(cfg, None), TrainConfig(middle="digital"))
        result = run_emulate_sweep(cfg, target_state=state, test=_images(8, 1, "test"))
        assert result.errors == []
        assert 0.0 <= result.detail["accuracy"].iloc[0] <= 1.0
        assert "accuracy_std" in result.aggregate.columns


class TestTargetNetwork:
    def test_existing_checkpoint_is_reused(self, tmp_path):
        cfg = parse_experiment_config({"mode": "emulate", "sweep": {"variable": "m", "values": [8]}})
        state = init_state(point_system(cfg, None), TrainConfig(middle="digital"))
        path = str(tmp_path / "target.blob")
        airnn.save_checkpoint(state, path)
        loaded = train_target_network(cfg, _images(4, 0, "train"), None, checkpoint=path)
        np.testing.assert_array_equal(loaded.params["W"], state.params["W"])

    def test_training_writes_checkpoint(self, tmp_path):
        cfg = parse_experiment_config({
            "mode": "emulate", "sweep": {"variable": "m", "values": [8]},
            "emulate": {"target_epochs": 1}, "train": {"batch_size": 4, "max_batches": 1},
        })
        path = str(tmp_path / "nested" / "target.blob")
        state = train_target_network(cfg, _images(8, 0, "train"), None, checkpoint=path)
        assert os.path.exists(path)
        assert state.middle == "digital"


class TestTrainSweep:
    def test_schemes_and_traces(self, tmp_path):
        cfg = parse_experiment_config({
            "mode": "train",
            "system": {"n": COMPLEX_FEATURES, "m": 8, "sigma2": 0.0},
            "sweep": {"variable": "p_max_db", "values": [0.0]},
            "train": {"schemes": ["baseline1", "digital"], "epochs": 1, "batch_size": 4, "max_batches": 2},
            "seeds": [0],
        })
        datasets = (_images(16, 0, "train"), _images(8, 1, "test"))
        result = run_train_sweep(cfg, out_dir=str(tmp_path), datasets=datasets)
        assert result.errors == []
        assert list(result.detail["scheme"]) == ["baseline1", "digital"]
        assert len(result.aggregate) == 2
        for path in result.detail["trace_path"]:
            assert os.path.exists(path)


class TestRankCheck:
    def test_pure_los_single_surface(self):
        cfg = parse_experiment_config({
            "mode": "rank_check",
            "system": {"n": 4, "m": 16},
            "rank_check": {"k_values": ["los"], "l_values": [1], "draws": 3},
        })
        report = run_rank_check(cfg)
        case = report["cases"][0]
        assert case["rank_min"] == case["rank_max"] == 1
        assert case["expected_rank_rate"] == 1.0
        assert report["bound_satisfied_rate"] == 1.0
        assert report["total_draws"] == 3

    def test_rayleigh_is_full_rank(self):
        cfg = parse_experiment_config({
            "mode": "rank_check",
            "system": {"n": 4, "m": 16},
            "rank_check": {"k_values": ["rayleigh"], "l_values": [1, 2], "draws": 2},
        })
        report = run_rank_check(cfg)
        assert [c["rank_max"] for c in report["cases"]] == [4, 4]
        assert all(c["expected_rank"] is None for c in report["cases"])
