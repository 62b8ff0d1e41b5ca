import json
import os

import pandas as pd
import pytest

from airfc_modules.channel import RankReport
from main import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main, parse_seeds
from shared_modules.errors import ConfigError


def _write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


EMULATE = {
    "experiment": "cli_small",
    "mode": "emulate",
    "system": {"n": 4, "m": 8, "l": 1, "p_max_db": 0.0, "k_db": 10.0, "sigma2": 1.0},
    "sweep": {"variable": "p_max_db", "values": [0.0, 10.0]},
    "emulate": {"target": "random"},
    "seeds": [0],
}

RANK = {
    "experiment": "cli_rank",
    "mode": "rank_check",
    "system": {"n": 4, "m": 16},
    "rank_check": {"k_values": ["los", "rayleigh"], "l_values": [1], "draws": 2},
}


class TestSeedParsing:
    def test_forms(self):
        assert parse_seeds("0-3,10") == [0, 1, 2, 3, 10]
        assert parse_seeds("5") == [5]

    def test_errors(self):
        with pytest.raises(ConfigError):
            parse_seeds("a-b")
        with pytest.raises(ConfigError):
            parse_seeds(",")


class TestExitCodes:
    def test_print_schema(self, capsys):
        assert main(["--print-schema"]) == EXIT_OK
        assert "properties" in json.loads(capsys.readouterr().out)

    def test_no_command(self):
        assert main([]) == EXIT_CONFIG

    def test_missing_config(self, tmp_path):
        assert main(["emulate", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG

    def test_mode_mismatch(self, tmp_path):
        path = _write_config(tmp_path, RANK)
        assert main(["emulate", "--config", path, "--out", str(tmp_path / "out")]) == EXIT_CONFIG

    def test_bad_thread_count(self, tmp_path):
        path = _write_config(tmp_path, EMULATE)
        assert main(["emulate", "--config", path, "--threads", "0", "--out", str(tmp_path / "out")]) == EXIT_CONFIG

    def test_failed_point_exits_with_partial_results(self, tmp_path):
        doc = dict(EMULATE, sweep={"variable": "l", "values": [1, 20]})
        out = tmp_path / "out"
        assert main(["emulate", "--config", _write_config(tmp_path, doc), "--out", str(out)]) == EXIT_RUNTIME
        meta = json.loads((out / "emulate_results.meta.json").read_text(encoding="utf-8"))
        assert len(meta["errors"]) == 1
        assert (out / "emulate_results.csv").exists()


class TestCommands:
    def test_emulate_writes_results(self, tmp_path):
        out = tmp_path / "out"
        args = ["emulate", "--config", _write_config(tmp_path, EMULATE), "--out", str(out),
                "--seeds", "0-1", "--excel", "--performance-log"]
        assert main(args) == EXIT_OK

        table = pd.read_csv(out / "emulate_results.csv")
        assert (table["row_type"] == "detail").sum() == 4
        assert (table["row_type"] == "aggregate").sum() == 2
        meta = json.loads((out / "emulate_results.meta.json").read_text(encoding="utf-8"))
        assert meta["command"] == "emulate"
        assert meta["config"]["seeds"] == [0, 1]
        assert meta["sweep_linear"][1]["linear"] == pytest.approx(10.0)
        assert (out / "review.xlsx").exists()
        assert (out / "performance_logs" / "log_session.jsonl").exists()

    def test_rank_check(self, tmp_path):
        out = tmp_path / "rank"
        assert main(["rank-check", "--config", _write_config(tmp_path, RANK), "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "rank_check.json").read_text(encoding="utf-8"))
        assert report["bound_satisfied_rate"] == 1.0
        assert [c["rank_max"] for c in report["cases"]] == [1, 4]

    def test_rank_check_fails_when_bound_violated(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr("airfc_modules.sweeps.rank_bound_check",
                            lambda ch, phases: RankReport(rank_h=3, rank_rx=1, rank_tx=1, bound=1))
        out = tmp_path / "rank"
        assert main(["rank-check", "--config", _write_config(tmp_path, RANK), "--out", str(out)]) == EXIT_RUNTIME
        report = json.loads((out / "rank_check.json").read_text(encoding="utf-8"))
        assert report["bound_satisfied_rate"] == 0.0
        assert "Rank bound violated" in capsys.readouterr().out

    def test_unexpected_exception_exits_runtime(self, tmp_path, monkeypatch, capsys):
        def broken(cfg):
            raise KeyError("cases")

        monkeypatch.setattr("main.run_rank_check", broken)
        path = _write_config(tmp_path, RANK)
        assert main(["rank-check", "--config", path, "--out", str(tmp_path / "rank")]) == EXIT_RUNTIME
        assert "Unexpected failure: KeyError" in capsys.readouterr().err

    def test_dump_channel(self, tmp_path):
        out = tmp_path / "dump"
        args = ["dump-channel", "--config", _write_config(tmp_path, EMULATE), "--out", str(out), "--seeds", "3"]
        assert main(args) == EXIT_OK
        assert os.path.exists(out / "channel_seed3.blob")
        header = json.loads((out / "channel_seed3.json").read_text(encoding="utf-8"))
        assert header["index"] == 3
        assert header["ris_elements"] == [8]
