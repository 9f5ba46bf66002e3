"""
Tests for the optimizers and the layer-by-layer trainer.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from wsee_unfold.core.exceptions import DomainError, InvalidInputError, ShapeError
from wsee_unfold.models.fum import FumModel
from wsee_unfold.models.optimizers import Adam, GradientDescent
from wsee_unfold.models.training import (
    IncrementalTrainer,
    TrainingData,
    TrainingOptions,
    achieved_ratio,
    make_optimizer,
)


class TestOptimizers:

    def test_gradient_descent_step(self):
        params = {"a": np.array([1.0, 2.0]), "b": np.array([3.0])}
        updated, rejected = GradientDescent(0.5).step(params, {"a": np.array([2.0, -2.0])})
        assert rejected == 0
        np.testing.assert_allclose(updated["a"], [0.0, 3.0])
        assert updated["b"] is params["b"]

    def test_adam_first_step_is_learning_rate_sized(self):
        params = {"w": np.array([0.0, 0.0])}
        updated, _ = Adam(learning_rate=0.1).step(params, {"w": np.array([4.0, -0.01])})
        np.testing.assert_allclose(updated["w"], [-0.1, 0.1], rtol=1e-5)

    @pytest.mark.parametrize("optimizer", [GradientDescent(0.1), Adam(0.1)])
    def test_nan_gradients_are_rejected(self, optimizer):
        params = {"w": np.ones(2), "v": np.ones(2)}
        updated, rejected = optimizer.step(params, {"w": np.array([math.nan, 1.0]), "v": np.ones(2)})
        assert rejected == 1
        np.testing.assert_array_equal(updated["w"], np.ones(2))
        assert np.all(updated["v"] < 1.0)

    def test_make_optimizer(self):
        assert isinstance(make_optimizer(TrainingOptions(optimizer="gd")), GradientDescent)
        assert isinstance(make_optimizer(TrainingOptions()), Adam)


class TestTrainingData:

    def test_shapes_must_agree(self):
        with pytest.raises(ShapeError):
            TrainingData(np.ones((2, 2, 2, 2)), np.ones((2, 2, 3)), np.ones(2))
        with pytest.raises(ShapeError):
            TrainingData(np.ones((2, 2, 2, 2)), np.ones((2, 2, 2)), np.ones(3))

    def test_subset(self, labelled_data):
        part = labelled_data.subset([3, 0])
        assert len(part) == 2
        np.testing.assert_array_equal(part.gains[1], labelled_data.gains[0])

    def test_ratio_of_labels_is_one(self, labelled_data, small_cfg, mocker):
        model = FumModel.initial(small_cfg, 1)
        mocker.patch.object(FumModel, "predict", return_value=labelled_data.target_rho)
        assert achieved_ratio(model, labelled_data) == pytest.approx(1.0)


class TestIncrementalTrainer:

    def test_empty_training_set(self, small_cfg):
        empty = TrainingData(np.ones((0, 2, 2, 2)), np.ones((0, 2, 2)), np.ones(0))
        with pytest.raises(InvalidInputError):
            IncrementalTrainer().train(FumModel.initial(small_cfg, 1), empty)

    def test_single_layer_has_no_joint_round(self, small_cfg, labelled_data):
        options = TrainingOptions(epochs_per_round=2, batch_size=4, optimizer="gd")
        result = IncrementalTrainer(options).train(FumModel.initial(small_cfg, 1), labelled_data)
        assert [(row.round, row.epoch) for row in result.log] == [(0, 0), (0, 1)]
        assert result.final_ratio == result.log[-1].wsee_ratio

    def test_domain_errors_skip_the_batch(self, small_cfg, labelled_data, mocker, caplog):
        mocker.patch.object(FumModel, "training_loss", side_effect=DomainError("log of a negative value"))
        options = TrainingOptions(epochs_per_round=1, batch_size=2, optimizer="gd")
        result = IncrementalTrainer(options).train(FumModel.initial(small_cfg, 1), labelled_data)
        assert result.skipped_batches == 2
        assert math.isnan(result.log[0].loss)
        assert "Skipping batch" in caplog.text

    def test_augmentation_multiplies_the_batch(self, labelled_data):
        trainer = IncrementalTrainer(TrainingOptions(n_perms=3))
        augmented = trainer._augment(labelled_data)
        assert len(augmented) == 3 * len(labelled_data)
        np.testing.assert_array_equal(augmented.gains[:4], labelled_data.gains)
        np.testing.assert_array_equal(np.sort(augmented.target_rho[4:], axis=-1),
                                      np.sort(labelled_data.target_rho, axis=-1))

    def test_training_is_reproducible(self, small_cfg, labelled_data):
        options = TrainingOptions(epochs_per_round=1, final_epochs=1, batch_size=2, optimizer="gd")
        first = IncrementalTrainer(options).train(FumModel.initial(small_cfg, 2), labelled_data)
        second = IncrementalTrainer(options).train(FumModel.initial(small_cfg, 2), labelled_data)
        assert [row.to_dict() for row in first.log] == [row.to_dict() for row in second.log]

    @pytest.mark.parametrize("show_progress", [False, True])
    def test_epoch_bar_per_round(self, small_cfg, labelled_data, mocker, show_progress):
        bar = mocker.patch("wsee_unfold.models.training.tqdm", side_effect=lambda iterable, **kwargs: iterable)
        options = TrainingOptions(epochs_per_round=1, final_epochs=1, batch_size=4, optimizer="gd")
        IncrementalTrainer(options, show_progress=show_progress).train(FumModel.initial(small_cfg, 2), labelled_data)
        labels = [call.kwargs["desc"] for call in bar.call_args_list]
        assert labels == ["Round 0", "Round 1", "Joint round"]
        assert all(call.kwargs["disable"] == (not show_progress) for call in bar.call_args_list)
