"""
Property checks of the FP building blocks against 1-D numerical oracles and
finite-difference gradients, over seeded batches of random instances.
"""
from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from wsee_unfold.autodiff import Tape, grad_check
from wsee_unfold.netmodel.allocation import random_feasible_allocation
from wsee_unfold.netmodel.channels import generate_channel_batch, generate_channels, stack_gains
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.netmodel.metrics import consumed_power, interference, rate, signal_power, sinr, wsee
from wsee_unfold.solvers.fp_closedform import CfState, objective_cf, rate_lagrange, solve_algorithm2, update_z_cf
from wsee_unfold.solvers.fp_numerical import solve_algorithm1, update_y, update_z
from wsee_unfold.solvers.options import SolverOptions

ORACLE_INSTANCES = 200


def golden_argmax(f, start: float = 1.0) -> float:
    """Golden-section maximizer of ``f`` bracketed around ``start``."""
    return float(minimize_scalar(lambda t: -f(t), bracket=(0.5 * start, start), method="golden").x)


def random_instances(cfg: NetworkConfig, count: int, seed: int):
    """``count`` (gains, random feasible rho) pairs drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    for channel in generate_channel_batch(cfg, count, seed=seed):
        yield channel.gains, random_feasible_allocation(cfg, rng).rho


def is_non_decreasing(trace, slack: float = 1e-9) -> bool:
    return all(b >= a - slack * max(1.0, abs(a)) for a, b in zip(trace, trace[1:]))


@pytest.fixture
def random_rho(small_cfg):
    return random_feasible_allocation(small_cfg, np.random.default_rng(12)).rho


class TestAuxiliaryOptima:

    def test_y_maximizes_quadratic_term(self, small_cfg):
        for G, rho in random_instances(small_cfg, ORACLE_INSTANCES, seed=40):
            R = np.asarray(rate(sinr(G, rho, small_cfg), small_cfg))
            D = np.asarray(consumed_power(rho, small_cfg))
            y = np.asarray(update_y(G, rho, small_cfg))
            for idx in np.ndindex(small_cfg.shape):
                t = golden_argmax(lambda s: 2 * s * y[idx] * np.sqrt(R[idx]) - (s * y[idx]) ** 2 * D[idx])
                assert t == pytest.approx(1.0, abs=1e-6)

    def test_z_maximizes_decoupled_sinr(self, small_cfg):
        for G, rho in random_instances(small_cfg, ORACLE_INSTANCES, seed=41):
            S = np.asarray(signal_power(G, rho, small_cfg))
            noisy = np.asarray(interference(G, rho, small_cfg)) + small_cfg.noise_power
            z = np.asarray(update_z(G, rho, small_cfg))
            for idx in np.ndindex(small_cfg.shape):
                t = golden_argmax(lambda s: 2 * s * z[idx] * np.sqrt(S[idx]) - (s * z[idx]) ** 2 * noisy[idx])
                assert t == pytest.approx(1.0, abs=1e-6)

    def test_sinr_maximizes_lagrange_rate(self, small_cfg):
        for G, rho in random_instances(small_cfg, ORACLE_INSTANCES, seed=42):
            gamma = np.asarray(sinr(G, rho, small_cfg))
            for idx in np.ndindex(small_cfg.shape):
                def entry(s, idx=idx):
                    scaled = gamma.copy()
                    scaled[idx] *= s
                    return float(np.asarray(rate_lagrange(G, rho, scaled, small_cfg))[idx])
                scale = abs(entry(1.0)) + 1.0
                t = golden_argmax(lambda s: entry(s) / scale)
                assert t == pytest.approx(1.0, abs=1e-5)


class TestGradients:

    def test_wsee_tape(self, small_channel, small_cfg, random_rho):
        scale = 1.0 / float(wsee(small_channel, random_rho, small_cfg))
        tape = Tape()
        rho = tape.input("rho", random_rho)
        tape.set_output(wsee(small_channel.gains, rho, small_cfg) * scale)
        assert grad_check(tape) < 1e-4

    def test_objective_cf_tape(self, small_channel, small_cfg, random_rho):
        G = small_channel.gains
        gamma = np.asarray(sinr(G, random_rho, small_cfg)) * 1.2
        y = np.asarray(update_y(G, random_rho, small_cfg))
        z = np.asarray(update_z_cf(G, random_rho, gamma, small_cfg))
        scale = 1.0 / float(wsee(G, random_rho, small_cfg))
        tape = Tape()
        rho = tape.input("rho", random_rho)
        tape.set_output(objective_cf(G, CfState(rho, gamma, y, z), small_cfg) * scale)
        assert grad_check(tape) < 1e-4

    @pytest.mark.slow
    def test_tapes_over_random_points(self, small_cfg):
        for G, rho0 in random_instances(small_cfg, 100, seed=43):
            scale = 1.0 / float(wsee(G, rho0, small_cfg))
            gamma = np.asarray(sinr(G, rho0, small_cfg))
            y = np.asarray(update_y(G, rho0, small_cfg))
            z = np.asarray(update_z_cf(G, rho0, gamma, small_cfg))

            tape = Tape()
            tape.set_output(wsee(G, tape.input("rho", rho0), small_cfg) * scale)
            assert grad_check(tape) < 1e-4

            tape = Tape()
            tape.set_output(objective_cf(G, CfState(tape.input("rho", rho0), gamma, y, z), small_cfg) * scale)
            assert grad_check(tape) < 1e-4


def cf_gradient_at(G, rho, cfg: NetworkConfig):
    """``(objective_cf, d objective_cf / d rho)`` with the auxiliaries held at their optima for ``rho``."""
    gamma = np.asarray(sinr(G, rho, cfg))
    y = np.asarray(update_y(G, rho, cfg))
    z = np.asarray(update_z_cf(G, rho, gamma, cfg))
    tape = Tape()
    node = tape.input("rho", rho)
    tape.set_output(objective_cf(G, CfState(node, gamma, y, z), cfg))
    value = float(tape.forward())
    return value, tape.backward()["rho"]


def interior_entries(rho: np.ndarray, margin: float = 1e-3) -> np.ndarray:
    """Entries strictly inside the box whose BS budget is not active."""
    slack = rho.sum(axis=-1, keepdims=True) < 1.0 - margin
    return (rho > margin) & (rho < 1.0 - margin) & slack


class TestClosedFormStationarity:

    @pytest.mark.slow
    def test_fixed_point_is_stationary(self, small_cfg):
        opts = SolverOptions(epsilon=1e-14, max_outer_iters=5000)
        checked = 0
        for channel in generate_channel_batch(small_cfg, 100, seed=44):
            report = solve_algorithm2(channel, small_cfg, opts)
            rho = report.rho_final.rho
            value, grad = cf_gradient_at(channel.gains, rho, small_cfg)
            interior = interior_entries(rho)
            assert np.all(np.abs(grad[interior]) < 1e-5 * (abs(value) + 1.0))
            checked += int(interior.sum())
        assert checked > 0

    def test_single_link_fixed_point(self, single_link_cfg):
        gains = np.array([[[5e-9]]])
        report = solve_algorithm2(gains, single_link_cfg, SolverOptions(epsilon=1e-14, max_outer_iters=2000))
        rho = report.rho_final.rho
        value, grad = cf_gradient_at(gains, rho, single_link_cfg)
        assert interior_entries(rho).all()
        assert abs(grad[0, 0]) < 1e-5 * (abs(value) + 1.0)


class TestSolutionQuality:

    def test_single_link_matches_scalar_optimum(self, single_link_cfg):
        gains = np.array([[[5e-9]]])
        best = minimize_scalar(
            lambda r: -float(wsee(gains, np.array([[r]]), single_link_cfg)), bounds=(0.0, 1.0), method="bounded",
            options={"xatol": 1e-10},
        )
        report = solve_algorithm2(gains, single_link_cfg, SolverOptions(epsilon=1e-12, max_outer_iters=500))
        assert report.final_wsee == pytest.approx(-best.fun, rel=1e-4)

    @pytest.mark.slow
    def test_solvers_agree(self, small_cfg):
        close = 0
        for seed in range(100):
            channel = generate_channels(small_cfg, seed=100 + seed)
            fp = solve_algorithm1(channel, small_cfg).final_wsee
            cf = solve_algorithm2(channel, small_cfg).final_wsee
            close += abs(cf - fp) <= 0.02 * fp
        assert close >= 95


@pytest.mark.slow
class TestTermination:

    @pytest.fixture
    def four_by_four(self) -> NetworkConfig:
        return NetworkConfig(num_bs=4, users_per_bs=4)

    @pytest.mark.parametrize("solve", [solve_algorithm1, solve_algorithm2], ids=["fp", "cf"])
    def test_monotone_and_within_fifty_iterations(self, four_by_four, solve):
        opts = SolverOptions(epsilon=1e-4, max_outer_iters=100)
        for gains in stack_gains(generate_channel_batch(four_by_four, 100, seed=45)):
            report = solve(gains, four_by_four, opts)
            assert report.converged
            assert report.iterations <= 50
            assert is_non_decreasing(report.objective_trace)
