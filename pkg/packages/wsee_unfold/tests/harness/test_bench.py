"""
Tests for the benchmark experiments.
"""
from __future__ import annotations

import numpy as np
import pytest

from wsee_unfold.core.exceptions import InvalidInputError, ModelNotTrainedError
from wsee_unfold.harness.bench import (
    BenchOptions,
    Scheme,
    ablation_attention,
    ablation_layers,
    bench_pmax_sweep,
    convergence_traces,
    eval_off_training,
    measure_inference,
    shifted_config,
    with_config,
)
from wsee_unfold.harness.dataset import DatasetOptions, gen_dataset
from wsee_unfold.models.fum import FumModel, fum_train_incremental
from wsee_unfold.models.masum import masum_train
from wsee_unfold.models.training import TrainingOptions
from wsee_unfold.netmodel.channels import generate_channel_batch, stack_gains
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.netmodel.metrics import wsee


@pytest.fixture
def trained_fum(small_cfg):
    return FumModel.initial(small_cfg, 2).mark_trained()


class TestSweep:

    def test_default_grid(self):
        grid = BenchOptions().pmax_range()
        assert len(grid) == 11
        assert grid[0] == -30.0 and grid[-1] == pytest.approx(0.0)

    def test_sweep_is_complete(self, small_cfg, trained_fum):
        result = bench_pmax_sweep(small_cfg, ["fp", "cf", "fum"], [-10.0, -7.0], {"fum": trained_fum}, n_eval=2)
        assert result.is_complete()
        assert result.schemes() == ["fp", "cf", "fum"]
        assert len(result.curve("cf")) == 2
        for row in result.rows:
            assert row.wsee_bits_per_joule > 0
            assert row.wall_time_s >= 0
            if row.scheme == "fp":
                assert row.accuracy_pct == pytest.approx(100.0)

    def test_untrained_model_is_refused(self, small_cfg):
        with pytest.raises(ModelNotTrainedError):
            bench_pmax_sweep(small_cfg, ["fum"], [-10.0], {"fum": FumModel.initial(small_cfg, 1)}, n_eval=1)

    def test_missing_model_is_refused(self, small_cfg):
        with pytest.raises(InvalidInputError):
            bench_pmax_sweep(small_cfg, ["masum"], [-10.0], {}, n_eval=1)


class TestOffTraining:

    def test_shifted_scenario(self, small_cfg):
        shifted = shifted_config(small_cfg)
        assert shifted.path_loss_exponent == pytest.approx(small_cfg.path_loss_exponent + 0.5)
        assert shifted.fading_variance == pytest.approx(small_cfg.fading_variance * 1.5)
        assert shifted.shape == small_cfg.shape

    def test_ratios_per_model(self, small_cfg, trained_fum):
        ratios = eval_off_training({"fum": trained_fum}, shifted_config(small_cfg), n_eval=2)
        assert set(ratios) == {"fum"}
        assert 0.0 < ratios["fum"]

    def test_scenario_shape_must_match(self, trained_fum):
        with pytest.raises(InvalidInputError):
            with_config(trained_fum, NetworkConfig(num_bs=3, users_per_bs=2))


class TestTiming:

    def test_one_sample_per_call(self, small_cfg, trained_fum):
        gains = stack_gains(generate_channel_batch(small_cfg, 2, seed=0))
        stats = measure_inference(Scheme.FUM, gains, 1, small_cfg, {"fum": trained_fum})
        assert len(stats.samples) == 2
        assert stats.median <= stats.p95 or stats.median == pytest.approx(stats.p95)
        solver = measure_inference(Scheme.ALGORITHM2, gains[0], 2, small_cfg)
        assert len(solver.samples) == 2

    def test_timed_calls_run_single_threaded(self, small_cfg, trained_fum, mocker):
        limits = mocker.patch("wsee_unfold.harness.bench.threadpool_limits")
        gains = stack_gains(generate_channel_batch(small_cfg, 2, seed=0))
        measure_inference(Scheme.FUM, gains, 1, small_cfg, {"fum": trained_fum})
        limits.assert_called_once_with(limits=1)
        limits.return_value.__enter__.assert_called_once()

    def test_needs_a_repetition(self, small_cfg):
        gains = stack_gains(generate_channel_batch(small_cfg, 1, seed=0))
        with pytest.raises(InvalidInputError):
            measure_inference(Scheme.ALGORITHM1, gains, 0, small_cfg)


def test_convergence_traces(small_channel, small_cfg):
    rows = convergence_traces(small_channel.gains, small_cfg)
    algorithms = {algorithm for _, algorithm, _ in rows}
    assert algorithms == {"fp", "cf"}
    first_cf = [row for row in rows if row[1] == "cf"][0]
    assert first_cf[0] == 1


@pytest.mark.slow
class TestAblations:

    @pytest.fixture
    def dataset(self, small_cfg):
        return gen_dataset(small_cfg, 4, seed=1, options=DatasetOptions(restarts=1), workers=1)

    def test_layer_grid(self, small_cfg, dataset):
        options = TrainingOptions(epochs_per_round=1, final_epochs=0, batch_size=4, optimizer="gd")
        bench = BenchOptions(timing_instances=1, timing_reps=1)
        rows = ablation_layers(small_cfg, dataset, grid=[1, 2], training=options, bench=bench)
        assert [row.setting for row in rows] == [1, 2]
        assert all(row.accuracy_pct > 0 and row.inference_ms >= 0 for row in rows)

    def test_attention_grid(self, small_cfg, dataset):
        options = TrainingOptions(epochs_per_round=1, final_epochs=0, batch_size=4)
        bench = BenchOptions(timing_instances=1, timing_reps=1)
        rows = ablation_attention(small_cfg, dataset, grid=[0, 1], num_stages=2, training=options, bench=bench)
        assert [row.setting for row in rows] == [0, 1]
        with pytest.raises(InvalidInputError):
            ablation_attention(small_cfg, dataset, grid=[3], num_stages=2, training=options, bench=bench)


@pytest.mark.slow
def test_solver_curves_rise_then_saturate():
    grid = [-30.0, -25.0, -20.0, -15.0, -10.0, -5.0, 0.0]
    result = bench_pmax_sweep(NetworkConfig(), ["fp", "cf"], grid, n_eval=10, seed=3)
    for scheme in ("fp", "cf"):
        values = [value for _, value in result.curve(scheme)]
        assert all(b >= a * (1 - 1e-3) for a, b in zip(values, values[1:]))
        assert values[-1] > values[0]
        assert values[-1] / values[grid.index(-10.0)] - 1.0 < 0.01


@pytest.fixture(scope="module")
def desk_cfg() -> NetworkConfig:
    return NetworkConfig(num_bs=4, users_per_bs=2)


@pytest.fixture(scope="module")
def desk_dataset(desk_cfg):
    options = DatasetOptions(n_samples=1000, restarts=1, train_share=0.8)
    dataset = gen_dataset(desk_cfg, options.n_samples, seed=2, options=options)
    assert len(dataset.split("train")) == 800
    return dataset


@pytest.fixture(scope="module")
def desk_models(desk_cfg, desk_dataset):
    fum_options = TrainingOptions(optimizer="gd", learning_rate=1e-2)
    fum = fum_train_incremental(desk_dataset, desk_cfg, 5, fum_options.epochs_per_round, fum_options.learning_rate,
                                fum_options.batch_size, fum_options).model
    masum = masum_train(desk_dataset, desk_cfg, num_stages=5, attention_positions=(3, 4)).model
    return {"fum": fum, "masum": masum}


def held_out_ratio(model, dataset) -> float:
    data = dataset.training_data("test")
    achieved = np.asarray(wsee(data.gains, model.predict(data.gains), model.cfg))
    return float(np.mean(achieved / data.target_wsee))


@pytest.mark.slow
class TestDeskScale:

    def test_held_out_accuracy(self, desk_models, desk_dataset):
        assert held_out_ratio(desk_models["fum"], desk_dataset) >= 0.97
        assert held_out_ratio(desk_models["masum"], desk_dataset) >= 0.95

    def test_inference_speed_ordering(self, desk_models, desk_dataset, desk_cfg):
        gains = desk_dataset.gains("test")[:20]
        fum = measure_inference(Scheme.FUM, gains, 3, desk_cfg, desk_models)
        masum = measure_inference(Scheme.MASUM, gains, 3, desk_cfg, desk_models)
        solver = measure_inference(Scheme.ALGORITHM2, gains, 1, desk_cfg)
        assert solver.median >= 10.0 * fum.median
        assert masum.median > fum.median

    def test_fum_generalizes_better_off_training(self, desk_models, desk_cfg):
        ratios = eval_off_training(desk_models, shifted_config(desk_cfg), n_eval=50, seed=7)
        assert ratios["fum"] > ratios["masum"]
