"""
Tests for artifact storage.
"""
from __future__ import annotations

import csv
import json

import numpy as np
import pytest
from loguru import logger

from wsee_unfold.core.exceptions import InvalidInputError
from wsee_unfold.harness.dataset import DatasetOptions, gen_dataset
from wsee_unfold.models.fum import FumModel, fum_forward
from wsee_unfold.models.masum import MasumModel, masum_forward
from wsee_unfold.persistence.storage import ArtifactStorage, model_from_dict, model_to_dict
from wsee_unfold.solvers.fp_closedform import solve_algorithm2


@pytest.fixture
def storage():
    return ArtifactStorage(logger)


class TestModels:

    def test_fum_round_trip(self, storage, small_cfg, small_channel, tmp_path):
        model = FumModel.initial(small_cfg, 2).with_parameters({"layer1.alpha_rho": np.full((2, 2), 0.3)})
        path = storage.save_model(model.mark_trained(), tmp_path / "models" / "fum.json")
        restored = storage.load_model(path)
        assert isinstance(restored, FumModel)
        assert restored.trained
        np.testing.assert_array_equal(restored.layers[1].alpha_rho, model.layers[1].alpha_rho)
        np.testing.assert_array_equal(fum_forward(restored, small_channel)[0].rho, fum_forward(model, small_channel)[0].rho)

    def test_masum_round_trip(self, storage, small_cfg, small_channel, tmp_path):
        model = MasumModel.initial(small_cfg, num_stages=2, attention_positions=(1,), channels=2, seed=4)
        restored = storage.load_model(storage.save_model(model, tmp_path / "masum.json"))
        assert isinstance(restored, MasumModel)
        assert restored.attention_positions == (1,)
        assert not restored.trained
        np.testing.assert_array_equal(masum_forward(restored, small_channel).rho, masum_forward(model, small_channel).rho)

    def test_unknown_type(self, small_cfg):
        data = model_to_dict(FumModel.initial(small_cfg, 1))
        data["type"] = "lstm"
        with pytest.raises(InvalidInputError):
            model_from_dict(data)

    def test_missing_key_and_layer_count(self, small_cfg):
        data = model_to_dict(FumModel.initial(small_cfg, 2))
        data["L"] = 3
        with pytest.raises(InvalidInputError):
            model_from_dict(data)
        del data["cfg"]
        with pytest.raises(InvalidInputError):
            model_from_dict(data)

    def test_bad_json_and_missing_file(self, storage, tmp_path):
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        with pytest.raises(InvalidInputError):
            storage.load_model(broken)
        with pytest.raises(InvalidInputError):
            storage.load_model(tmp_path / "absent.json")


class TestDatasets:

    def test_round_trip(self, storage, small_cfg, tmp_path):
        dataset = gen_dataset(small_cfg, 3, seed=7, options=DatasetOptions(restarts=1), workers=1)
        path = storage.save_dataset(dataset, tmp_path / "data.jsonl")
        assert len(path.read_text().splitlines()) == 4
        restored = storage.load_dataset(path)
        assert restored.splits == dataset.splits
        np.testing.assert_array_equal(restored.gains(), dataset.gains())
        assert [s.target_wsee for s in restored.samples] == [s.target_wsee for s in dataset.samples]

    def test_header_is_required(self, storage, small_cfg, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text(json.dumps({"kind": "sample"}) + "\n")
        with pytest.raises(InvalidInputError):
            storage.load_dataset(path)

    def test_sample_count_must_match(self, storage, small_cfg, tmp_path):
        dataset = gen_dataset(small_cfg, 2, seed=7, options=DatasetOptions(restarts=1), workers=1)
        path = storage.save_dataset(dataset, tmp_path / "data.jsonl")
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(InvalidInputError):
            storage.load_dataset(path)


class TestTables:

    def test_csv_header_and_rows(self, storage, tmp_path):
        path = storage.write_csv(tmp_path / "out.csv", ["a", "b"], [{"a": 1, "b": 2, "c": 3}])
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        assert rows == [{"a": "1", "b": "2"}]

    def test_report_without_timing(self, storage, small_channel, small_cfg, tmp_path):
        path = storage.save_report(solve_algorithm2(small_channel, small_cfg), tmp_path / "report.json")
        assert json.loads(path.read_text())["wall_time_s"] is None
