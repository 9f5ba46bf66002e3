"""
Integration tests for the wsee-unfold CLI commands.

Commands are invoked through the cyclopts app with a small run configuration
that writes every artifact under the test's temporary directory.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import List

import pytest

from wsee_unfold.cli_app import app
from wsee_unfold.models.fum import FumModel
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.persistence.storage import model_to_dict


def run_cli(args: List[str]) -> int:
    """Invoke the app and return its exit code (0 when it returns normally)."""
    try:
        app(args)
    except SystemExit as e:
        return 0 if e.code is None else int(e.code)
    return 0


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def test_commands_are_registered():
    for command in ("init", "gen-data", "solve", "train", "eval", "bench", "ablate", "trace"):
        assert command in app


class TestInit:

    def test_creates_toml(self, tmp_path):
        config_path = tmp_path / "wsee.toml"
        assert run_cli(["init", "--output-path", str(config_path)]) == 0
        content = config_path.read_text()
        for section in ("[paths]", "[logging]", "[network]", "[solver]", "[training]", "[bench]"):
            assert section in content

    def test_creates_json(self, tmp_path):
        config_path = tmp_path / "run.json"
        assert run_cli(["init", "-o", str(config_path)]) == 0
        assert json.loads(config_path.read_text())["network"]["num_bs"] == 4


class TestSolve:

    def test_same_seed_same_report(self, cli_config, tmp_path):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        for out in (first, second):
            assert run_cli(["solve", "--algorithm", "fp", "-c", str(cli_config), "--seed", "7", "-o", str(out)]) == 0
        assert first.read_bytes() == second.read_bytes()
        report = json.loads(first.read_text())
        assert report["algorithm"] == "fp"
        assert report["wall_time_s"] is None

    def test_timing_is_opt_in(self, cli_config, tmp_path):
        out = tmp_path / "timed.json"
        assert run_cli(["solve", "-c", str(cli_config), "--timing", "-o", str(out)]) == 0
        assert json.loads(out.read_text())["wall_time_s"] >= 0.0

    def test_missing_config_is_invalid_input(self, tmp_path):
        assert run_cli(["solve", "-c", str(tmp_path / "absent.json")]) == 1

    def test_malformed_config_is_invalid_input(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"network": {"num_bs": -1}}))
        assert run_cli(["solve", "-c", str(bad)]) == 1


class TestDataAndModels:

    def test_gen_data_writes_header_and_samples(self, cli_config, tmp_path):
        out = tmp_path / "data.jsonl"
        assert run_cli(["gen-data", "-c", str(cli_config), "-n", "4", "-o", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 5
        assert json.loads(lines[0])["kind"] == "header"

    def test_gen_data_rejects_zero_samples(self, cli_config):
        assert run_cli(["gen-data", "-c", str(cli_config), "-n", "0"]) == 1

    def test_eval_refuses_untrained_model(self, cli_config, tmp_path):
        model_path = tmp_path / "fum.json"
        cfg = NetworkConfig(num_bs=2, users_per_bs=2, num_antennas=4)
        model_path.write_text(json.dumps(model_to_dict(FumModel.initial(cfg, 1))))
        assert run_cli(["eval", "-m", str(model_path), "-c", str(cli_config)]) == 1

    def test_eval_needs_a_model(self, cli_config):
        assert run_cli(["eval", "-c", str(cli_config)]) == 1

    def test_train_needs_a_dataset(self, cli_config, tmp_path):
        assert run_cli(["train", str(tmp_path / "absent.jsonl"), "-c", str(cli_config)]) == 1

    @pytest.mark.slow
    def test_train_then_eval(self, cli_config, tmp_path):
        data = tmp_path / "data.jsonl"
        model = tmp_path / "fum.json"
        assert run_cli(["gen-data", "-c", str(cli_config), "-o", str(data)]) == 0
        assert run_cli(["train", str(data), "--kind", "fum", "-l", "2", "-c", str(cli_config), "-o", str(model)]) == 0
        assert json.loads(model.read_text())["trained"] is True
        assert Path(tmp_path / "fum_training_log.csv").exists()
        report = tmp_path / "eval.json"
        assert run_cli(["eval", "-m", str(model), "-c", str(cli_config), "-o", str(report)]) == 0
        assert set(json.loads(report.read_text())) == {"in_distribution", "off_training"}


class TestTables:

    def test_unknown_scheme(self, cli_config):
        assert run_cli(["bench", "--scheme", "lstm", "-c", str(cli_config)]) == 1

    @pytest.mark.slow
    def test_bench_csv(self, cli_config, tmp_path):
        out = tmp_path / "bench.csv"
        assert run_cli(["bench", "-c", str(cli_config), "-o", str(out)]) == 0
        with open(out, newline="") as f:
            reader = csv.DictReader(f)
            rows = list(reader)
        assert reader.fieldnames == ["scheme", "p_max_dbw", "wsee_bits_per_joule", "wall_time_s", "accuracy_pct"]
        assert {(r["scheme"], float(r["p_max_dbw"])) for r in rows} == {
            (s, p) for s in ("fp", "cf") for p in (-10.0, -7.0)
        }

    def test_trace_csv(self, cli_config, tmp_path):
        out = tmp_path / "trace.csv"
        assert run_cli(["trace", "-c", str(cli_config), "-o", str(out)]) == 0
        with open(out, newline="") as f:
            rows = list(csv.DictReader(f))
        assert {r["algorithm"] for r in rows} == {"fp", "cf"}
        assert rows[0]["iteration"] == "1"
