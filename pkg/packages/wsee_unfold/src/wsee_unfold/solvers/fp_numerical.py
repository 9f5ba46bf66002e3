"""
Algorithm 1: quadratic-transform FP with a numerically solved rho-step.

Each outer iteration fixes the auxiliary variables at their closed-form
optima (``update_z``, ``update_y``) and ascends the transformed objective in
rho by projected gradient with backtracking. Gradients come from a tape
recorded once per rho-step and re-evaluated at every trial point.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import loguru as lg
import numpy as np

from wsee_unfold.autodiff import functional as F
from wsee_unfold.autodiff.tape import Tape
from wsee_unfold.core.exceptions import DomainError
from wsee_unfold.netmodel.allocation import PowerAllocation, RhoLike, as_rho, budget_projection, uniform_allocation
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.netmodel.metrics import (
    GainsLike,
    check_shapes,
    consumed_power,
    gain_array,
    interference,
    rate,
    signal_power,
    sinr,
    weighted_sum,
    wsee,
)
from wsee_unfold.solvers.options import SolverOptions
from wsee_unfold.solvers.report import SolverReport

ARMIJO_C1 = 1e-4


def require_positive(arg, what: str, allow_zero: bool = False) -> None:
    """Raise a DomainError naming the first link whose ``arg`` is not positive (or negative)."""
    vals = F.value(arg)
    bad = np.argwhere(vals < 0 if allow_zero else vals <= 0)
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        raise DomainError(f"{what} is not positive ({float(vals[idx]):.3e})", index=idx)


def update_y(G: GainsLike, rho: RhoLike, cfg: NetworkConfig):
    """Quadratic-transform optimum ``y = sqrt(R) / (rho * P + p_c)``."""
    R = rate(sinr(G, rho, cfg), cfg)
    return F.sqrt(R) / consumed_power(rho, cfg)


def update_z(G: GainsLike, rho: RhoLike, cfg: NetworkConfig):
    """Inner quadratic-transform optimum ``z = sqrt(S) / (I + sigma^2)``."""
    return F.sqrt(signal_power(G, rho, cfg)) / (interference(G, rho, cfg) + cfg.noise_power)


def transformed_rate(G: GainsLike, rho: RhoLike, z, cfg: NetworkConfig):
    """
    Rate with signal and interference decoupled by ``z``:
    ``B * log2(1 + 2 z sqrt(S) - z^2 (I + sigma^2))``.

    Raises:
        DomainError: the log argument is not positive; ``index`` names the link.
    """
    S = signal_power(G, rho, cfg)
    noisy = interference(G, rho, cfg) + cfg.noise_power
    arg = 1.0 + 2.0 * z * F.sqrt(S) - z * z * noisy
    require_positive(arg, "transformed-rate log argument")
    return cfg.bandwidth * F.log2(arg)


def objective_fp(G: GainsLike, rho: RhoLike, y, z, cfg: NetworkConfig):
    """``sum omega (2 y sqrt(R~) - y^2 (rho P + p_c))``; equals wsee at the auxiliary optima."""
    Rt = transformed_rate(G, rho, z, cfg)
    return weighted_sum(2.0 * y * F.sqrt(Rt) - y * y * consumed_power(rho, cfg), cfg)


def floor_projection(x: np.ndarray, floor: float) -> np.ndarray:
    """Feasible projection that keeps every entry at least ``floor``."""
    projected = np.maximum(budget_projection(x), floor)
    return projected / np.maximum(projected.sum(axis=-1, keepdims=True), 1.0)


@dataclass(frozen=True)
class SubproblemResult:
    rho: PowerAllocation
    objective: float
    iterations: int
    degraded: bool


def solve_rho_subproblem(
    G: GainsLike,
    y,
    z,
    rho0: RhoLike,
    cfg: NetworkConfig,
    opts: Optional[SolverOptions] = None,
    logger: Optional[lg.Logger] = None,
) -> SubproblemResult:
    """
    Ascend ``objective_fp`` in rho for fixed ``y`` and ``z``.

    The ascent direction is the gradient divided by ``|f| + 1``. A trial point
    is accepted only if it satisfies the Armijo condition and does not lower
    the objective; trial points where a log argument turns non-positive are
    rejected.

    Returns:
        The best iterate. ``degraded`` is set whenever the line search runs out
        of halvings before ``inner_tol`` is reached.
    """
    opts = opts or SolverOptions()
    gains = gain_array(G)
    y = np.asarray(F.value(y))
    z = np.asarray(F.value(z))
    rho = np.array(F.value(as_rho(rho0)), dtype=float)
    check_shapes(gains, rho, cfg)

    tape = Tape()
    rho_node = tape.input("rho", rho)
    tape.set_output(objective_fp(gains, rho_node, y, z, cfg))
    f = float(tape.forward())
    grad = tape.backward()["rho"]

    degraded = False
    iterations = 0
    for iterations in range(1, opts.inner_iters + 1):
        direction = grad / (abs(f) + 1.0)
        pg_norm = float(np.max(np.abs(budget_projection(rho + direction) - rho)))
        if pg_norm <= opts.inner_tol:
            break

        step = opts.inner_step
        accepted = False
        for _ in range(opts.max_halvings):
            candidate = floor_projection(rho + step * direction, opts.rho_floor)
            try:
                f_candidate = float(tape.forward({"rho": candidate}))
            except DomainError:
                f_candidate = -math.inf
            armijo = f + ARMIJO_C1 * float(np.sum(grad * (candidate - rho)))
            if f_candidate >= f and f_candidate >= armijo:
                accepted = True
                break
            step *= 0.5

        if not accepted:
            tape.forward({"rho": rho})
            degraded = True
            if logger is not None:
                logger.warning(f"rho-step line search exhausted (projected gradient {pg_norm:.3e})")
            break

        rho, f = candidate, f_candidate
        grad = tape.backward()["rho"]

    return SubproblemResult(
        rho=PowerAllocation(rho), objective=f, iterations=iterations, degraded=degraded
    )


def has_converged(f: float, f_prev: float, epsilon: float) -> bool:
    # Relative to |f_prev|: wsee is in bit/J, typically 1e7 to 1e8, so an
    # absolute epsilon would never trigger. Below 1 the rule turns absolute.
    return abs(f - f_prev) < epsilon * max(1.0, abs(f_prev))


def solve_algorithm1(
    G: GainsLike,
    cfg: NetworkConfig,
    opts: Optional[SolverOptions] = None,
    rho_init: Optional[RhoLike] = None,
    logger: Optional[lg.Logger] = None,
) -> SolverReport:
    """
    Run Algorithm 1 from ``rho_init`` (uniform ``1/(2K)`` by default).

    An outer step that would lower wsee keeps the previous iterate.
    """
    opts = opts or SolverOptions()
    log = (logger or lg.logger).bind(component="fp_numerical")
    start = time.perf_counter()

    gains = gain_array(G)
    rho = np.array(F.value(as_rho(rho_init if rho_init is not None else uniform_allocation(cfg))), dtype=float)
    check_shapes(gains, rho, cfg)

    f_prev = float(wsee(gains, rho, cfg))
    trace: list[float] = []
    converged = False
    degraded = False
    for t in range(1, opts.max_outer_iters + 1):
        z = update_z(gains, rho, cfg)
        y = update_y(gains, rho, cfg)
        sub = solve_rho_subproblem(gains, y, z, rho, cfg, opts, logger=log)
        degraded |= sub.degraded

        f = float(wsee(gains, sub.rho.rho, cfg))
        if f >= f_prev:
            rho = np.array(sub.rho.rho)
        else:
            f = f_prev
        trace.append(f)
        log.trace(f"iter {t}: wsee={f:.6e} inner_iters={sub.iterations}")

        if has_converged(f, f_prev, opts.epsilon):
            converged = True
            break
        f_prev = f

    elapsed = time.perf_counter() - start
    log.debug(f"Algorithm 1 finished: {len(trace)} iterations, wsee={trace[-1]:.6e}, converged={converged}")
    return SolverReport(
        rho_final=PowerAllocation(rho),
        objective_trace=trace,
        iterations=len(trace),
        converged=converged,
        wall_time=elapsed,
        algorithm="fp",
        degraded=degraded,
    )
