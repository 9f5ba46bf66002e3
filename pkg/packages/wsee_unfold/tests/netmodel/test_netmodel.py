"""
Tests for the scenario model: configuration, channels, allocations and link metrics.
"""
from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from wsee_unfold.core.exceptions import InvalidInputError, ShapeError
from wsee_unfold.netmodel.allocation import (
    PowerAllocation,
    budget_projection,
    project_feasible,
    random_feasible_allocation,
    uniform_allocation,
)
from wsee_unfold.netmodel.channels import (
    ChannelRealization,
    generate_channel_batch,
    generate_channels,
    partition_seeds,
    stack_gains,
)
from wsee_unfold.netmodel.config import NetworkConfig, dbw_to_watts, noise_power_watts, watts_to_dbw
from wsee_unfold.netmodel.metrics import interference, link_metrics, pre_sic_sinr, sinr, wsee


class TestNetworkConfig:

    def test_defaults(self):
        cfg = NetworkConfig()
        assert cfg.shape == (4, 2)
        assert cfg.num_links == 8
        assert cfg.noise_power == pytest.approx(noise_power_watts(250e3))
        assert cfg.weight_matrix.shape == (4, 2)

    def test_weight_table_must_match_shape(self):
        with pytest.raises(ValidationError):
            NetworkConfig(num_bs=2, users_per_bs=2, weights=[[1.0, 1.0, 1.0]])

    def test_negative_weight_rejected(self):
        with pytest.raises(ValidationError):
            NetworkConfig(num_bs=1, users_per_bs=2, weights=[[1.0, -1.0]])

    @pytest.mark.parametrize("weights", [0.0, [[0.0, 0.0], [0.0, 0.0]]])
    def test_all_zero_weights_rejected(self, weights):
        with pytest.raises(ValidationError, match="strictly positive"):
            NetworkConfig(num_bs=2, users_per_bs=2, weights=weights)

    def test_single_positive_weight_is_enough(self):
        cfg = NetworkConfig(num_bs=2, users_per_bs=2, weights=[[0.0, 0.0], [0.0, 2.0]])
        assert cfg.weight_matrix.sum() == 2.0

    def test_dbw_conversion(self):
        assert dbw_to_watts(0.0) == 1.0
        assert watts_to_dbw(0.01) == pytest.approx(-20.0)
        assert NetworkConfig().with_p_max_dbw(-10.0).p_max == pytest.approx(0.1)

    def test_identity_tracks_content(self):
        assert NetworkConfig().identity() == NetworkConfig().identity()
        assert NetworkConfig().identity() != NetworkConfig(p_max=0.2).identity()


class TestChannels:

    def test_same_seed_same_channel(self, small_cfg):
        assert generate_channels(small_cfg, seed=5) == generate_channels(small_cfg, seed=5)
        assert generate_channels(small_cfg, seed=5) != generate_channels(small_cfg, seed=6)

    def test_users_sorted_by_direct_gain(self, small_cfg):
        for seed in range(5):
            channel = generate_channels(small_cfg, seed=seed)
            assert channel.is_sic_ordered()
            assert channel.gains.shape == (2, 2, 2)
            assert np.all(channel.gains > 0)

    def test_gains_are_read_only(self, small_channel):
        with pytest.raises(ValueError):
            small_channel.gains[0, 0, 0] = 1.0

    def test_invalid_gains(self):
        with pytest.raises(ShapeError):
            ChannelRealization(gains=np.ones((2, 2, 3)))
        with pytest.raises(InvalidInputError):
            ChannelRealization(gains=np.zeros((1, 1, 1)))

    def test_batch_seeds_are_partitioned(self, small_cfg):
        batch = generate_channel_batch(small_cfg, 3, seed=1)
        assert [c.seed for c in batch] == partition_seeds(1, 3)
        assert stack_gains(batch).shape == (3, 2, 2, 2)
        with pytest.raises(InvalidInputError):
            stack_gains([])

    def test_row_round_trip_keeps_channel(self, small_channel, small_cfg):
        restored = ChannelRealization.from_row(small_channel.to_row(), small_cfg.identity())
        assert restored == small_channel


class TestAllocation:

    def test_uniform_and_random_are_feasible(self, small_cfg):
        uniform = uniform_allocation(small_cfg)
        assert np.all(uniform.rho == 0.25)
        rho = random_feasible_allocation(small_cfg, np.random.default_rng(0)).rho
        assert np.all(rho >= 0) and np.all(rho.sum(axis=-1) <= 1.0)

    def test_budget_exceeded_is_rejected(self):
        with pytest.raises(InvalidInputError):
            PowerAllocation(np.array([[0.7, 0.7]]))
        with pytest.raises(InvalidInputError):
            PowerAllocation(np.array([[math.nan, 0.1]]))
        with pytest.raises(ShapeError):
            PowerAllocation(np.array([0.1]))

    def test_projection(self):
        raw = np.array([[2.0, 2.0], [-1.0, 0.3]])
        projected = budget_projection(raw)
        np.testing.assert_allclose(projected, [[0.5, 0.5], [0.0, 0.3]])
        feasible = np.array([[0.2, 0.3]])
        np.testing.assert_array_equal(budget_projection(feasible), feasible)

    def test_project_feasible_rejects_nan_and_shape(self, small_cfg):
        with pytest.raises(InvalidInputError):
            project_feasible(np.array([[math.nan, 0.0], [0.0, 0.0]]))
        with pytest.raises(ShapeError):
            project_feasible(np.zeros((3, 2)), small_cfg)


class TestMetrics:

    def test_single_link_closed_form(self, single_link_cfg):
        cfg = single_link_cfg
        gains = np.array([[[2e-9]]])
        rho = np.array([[0.5]])
        gamma = 2e-9 * cfg.p_max * 0.5 / cfg.noise_power
        expected = cfg.bandwidth * math.log2(1.0 + gamma) / (0.5 * cfg.p_max + cfg.circuit_power)
        assert float(sinr(gains, rho, cfg)[0, 0]) == pytest.approx(gamma)
        assert float(wsee(gains, rho, cfg)) == pytest.approx(expected)

    def test_sic_interference_in_one_cell(self):
        cfg = NetworkConfig(num_bs=1, users_per_bs=2)
        gains = np.array([[[4e-9], [1e-9]]])
        rho = np.array([[0.3, 0.6]])
        P, noise = cfg.p_max, cfg.noise_power
        gamma = sinr(gains, rho, cfg)[0]
        assert gamma[0] == pytest.approx(4e-9 * P * 0.3 / noise)
        assert gamma[1] == pytest.approx(1e-9 * P * 0.6 / (1e-9 * P * 0.3 + noise))
        assert pre_sic_sinr(gains, rho, cfg)[0, 0] < gamma[0]

    def test_inter_cell_interference(self, small_channel, small_cfg):
        rho = uniform_allocation(small_cfg).rho
        G = small_channel.gains
        expected = small_cfg.p_max * (G[0, 0, 1] * rho[1].sum() + 0.0)
        assert float(interference(G, rho, small_cfg)[0, 0]) == pytest.approx(expected)

    def test_zero_power_gives_zero_wsee(self, small_channel, small_cfg):
        assert float(wsee(small_channel, np.zeros(small_cfg.shape), small_cfg)) == 0.0

    def test_batch_matches_single(self, small_cfg):
        channels = generate_channel_batch(small_cfg, 3, seed=2)
        gains = stack_gains(channels)
        rho = uniform_allocation(small_cfg, (3,)).rho
        batch = np.asarray(wsee(gains, rho, small_cfg))
        singles = [float(wsee(c, rho[0], small_cfg)) for c in channels]
        np.testing.assert_allclose(batch, singles)

    def test_link_metrics_sum(self, small_channel, small_cfg):
        metrics = link_metrics(small_channel, uniform_allocation(small_cfg), small_cfg)
        assert metrics.wsee == pytest.approx(float(np.sum(metrics.ee)))

    def test_shape_mismatch(self, small_channel):
        with pytest.raises(ShapeError):
            wsee(small_channel, np.zeros((3, 2)), NetworkConfig(num_bs=3, users_per_bs=2))
