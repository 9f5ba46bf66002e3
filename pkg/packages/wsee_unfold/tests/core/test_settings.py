"""
Tests for WseeUnfoldSettings loading and writing.
"""
from __future__ import annotations

import json

import pytest

from wsee_unfold.core.exceptions import InvalidInputError
from wsee_unfold.settings import LogLevel, WseeUnfoldSettings


class TestDefaults:

    def test_default_values(self, monkeypatch):
        monkeypatch.setenv("UNFOLD_EE_THREADS", "2")
        settings = WseeUnfoldSettings()
        assert settings.workers == 2
        assert settings.log_verbose_level == LogLevel.INFO
        assert settings.network.shape == (4, 2)
        assert settings.training.optimizer == "adam"
        assert settings.output_base_dir.is_absolute()

    def test_computed_dirs(self, tmp_path):
        settings = WseeUnfoldSettings(output_base_dir=tmp_path)
        assert settings.models_dir == tmp_path / "models"
        assert settings.logs_dir == tmp_path / "logs" / "wsee_unfold"
        settings.ensure_artifact_dirs()
        assert settings.datasets_dir.is_dir()
        assert settings.reports_dir.is_dir()


class TestFiles:

    def test_json_run_config(self, cli_config, tmp_path):
        settings = WseeUnfoldSettings.from_file(cli_config)
        assert settings.output_base_dir == (tmp_path / "artifacts").resolve()
        assert settings.log_verbose_level == LogLevel.WARNING
        assert settings.network.num_antennas == 4
        assert settings.bench.layer_grid == [1, 2]

    @pytest.mark.parametrize("name", ["config.toml", "config.json"])
    def test_written_config_reads_back(self, tmp_path, name):
        original = WseeUnfoldSettings(output_base_dir=tmp_path, seed=9)
        path = original.write_default_config(tmp_path / name)
        restored = WseeUnfoldSettings.from_file(path)
        assert restored.to_sections() == original.to_sections()

    def test_toml_has_sections(self, tmp_path):
        path = WseeUnfoldSettings(output_base_dir=tmp_path).write_default_config(tmp_path / "c.toml")
        text = path.read_text()
        assert "[network]" in text
        assert "[solver]" in text

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInputError):
            WseeUnfoldSettings.from_file(tmp_path / "absent.toml")

    def test_unparsable_file(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[network\nnum_bs = ")
        with pytest.raises(InvalidInputError):
            WseeUnfoldSettings.from_file(path)

    def test_invalid_values(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"network": {"num_bs": 0}}))
        with pytest.raises(InvalidInputError):
            WseeUnfoldSettings.from_file(path)

    def test_unknown_section_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"solver": {"tolerance": 1.0}}))
        with pytest.raises(InvalidInputError):
            WseeUnfoldSettings.from_file(path)

    def test_top_level_must_be_a_mapping(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(InvalidInputError):
            WseeUnfoldSettings.from_file(path)
