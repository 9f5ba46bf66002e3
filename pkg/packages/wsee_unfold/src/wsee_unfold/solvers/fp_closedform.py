"""
Algorithm 2: Lagrange-dual plus multidimensional quadratic transform with a
closed-form rho update.

With ``c = B / ln 2``, ``S`` the desired power, ``I`` the residual
interference and ``T = S + I + sigma^2`` the total received power:

* ``rate_lagrange  = B log2(1+g) - c g + c (1+g) S / T``
* ``rate_quadratic = B log2(1+g) - c g + 2 z sqrt(c (1+g) S) - z^2 T``
* ``update_z_cf    = sqrt(c (1+g) S) / T``

Both transforms are tight at their optima (``g = sinr``, ``z = update_z_cf``).
The rho update solves the per-entry stationarity condition of the
closed-form objective with every interference term read from the previous
iterate (Jacobi), which makes all entries independent.

Every function accepts batched arrays and tape nodes; the unfolded model
reuses ``closedform_step`` layer by layer.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Optional

import loguru as lg
import numpy as np

from wsee_unfold.autodiff import functional as F
from wsee_unfold.netmodel.allocation import PowerAllocation, RhoLike, as_rho, budget_projection, uniform_allocation
from wsee_unfold.netmodel.channels import direct_gains
from wsee_unfold.netmodel.config import NetworkConfig
from wsee_unfold.netmodel.metrics import (
    GainsLike,
    check_shapes,
    consumed_power,
    coupling_matrix,
    gain_array,
    interference,
    signal_power,
    sinr,
    weighted_sum,
    wsee,
)
from wsee_unfold.solvers.fp_numerical import has_converged, require_positive, update_y
from wsee_unfold.solvers.options import ClosedFormVariant, ObjectiveForm, SolverOptions
from wsee_unfold.solvers.report import SolverReport

_LN2 = np.log(2.0)
_POSITIVE_RATE = 1e-300


def nats_scale(cfg: NetworkConfig) -> float:
    """``B / ln 2``: converts a rate in nats to bit/s."""
    return cfg.bandwidth / _LN2


@dataclass(frozen=True)
class CfState:
    """Closed-form iterate. Fields are arrays (or tape nodes inside the unfolded model)."""

    rho: Any
    gamma: Any
    y: Any
    z: Any


def update_gamma(G: GainsLike, rho: RhoLike, cfg: NetworkConfig):
    return sinr(G, rho, cfg)


def total_received_power(G: GainsLike, rho: RhoLike, cfg: NetworkConfig):
    return signal_power(G, rho, cfg) + interference(G, rho, cfg) + cfg.noise_power


def rate_lagrange(G: GainsLike, rho: RhoLike, gamma, cfg: NetworkConfig):
    """Lagrange-dual rate; equals ``rate(sinr)`` at ``gamma = sinr(rho)`` and is below it elsewhere."""
    c = nats_scale(cfg)
    S = signal_power(G, rho, cfg)
    T = total_received_power(G, rho, cfg)
    return cfg.bandwidth * F.log2(1.0 + gamma) - c * gamma + c * (1.0 + gamma) * S / T


def rate_quadratic(G: GainsLike, rho: RhoLike, gamma, z, cfg: NetworkConfig):
    """Quadratic-transform rate; equals ``rate_lagrange`` at ``z = update_z_cf``."""
    c = nats_scale(cfg)
    S = signal_power(G, rho, cfg)
    T = total_received_power(G, rho, cfg)
    return (
        cfg.bandwidth * F.log2(1.0 + gamma)
        - c * gamma
        + 2.0 * z * F.sqrt(c * (1.0 + gamma) * S)
        - z * z * T
    )


def update_z_cf(
    G: GainsLike,
    rho: RhoLike,
    gamma,
    cfg: NetworkConfig,
    variant: ClosedFormVariant = ClosedFormVariant.DERIVED,
):
    """
    Optimal ``z`` of ``rate_quadratic``. The printed variant uses ``B`` in
    place of ``B / ln 2`` and ``I + sigma^2`` in place of ``T``; it is not tight.
    """
    S = signal_power(G, rho, cfg)
    if variant == ClosedFormVariant.PRINTED:
        return F.sqrt(cfg.bandwidth * (1.0 + gamma) * S) / (interference(G, rho, cfg) + cfg.noise_power)
    c = nats_scale(cfg)
    return F.sqrt(c * (1.0 + gamma) * S) / total_received_power(G, rho, cfg)


def objective_cf(
    G: GainsLike,
    state: CfState,
    cfg: NetworkConfig,
    form: ObjectiveForm = ObjectiveForm.SQRT,
):
    """
    Closed-form surrogate of wsee, one value per batch element.

    ``SQRT``: ``sum omega (2 y sqrt(Rq) - y^2 (rho P + p_c))``, equal to wsee at
    the auxiliary optima. ``LINEAR``: ``sum omega (2 y Rq - y^2 (rho P + p_c))``.

    Raises:
        DomainError: ``Rq`` is negative under the square root (SQRT form).
    """
    Rq = rate_quadratic(G, state.rho, state.gamma, state.z, cfg)
    power = consumed_power(state.rho, cfg)
    if form == ObjectiveForm.LINEAR:
        return weighted_sum(2.0 * state.y * Rq - state.y * state.y * power, cfg)
    require_positive(Rq, "quadratic-transform rate", allow_zero=True)
    return weighted_sum(2.0 * state.y * F.sqrt(Rq) - state.y * state.y * power, cfg)


@dataclass(frozen=True)
class ClosedFormUpdate:
    rho: Any
    degenerate: np.ndarray


def _derived_candidate(gains, state: CfState, cfg: NetworkConfig, form: ObjectiveForm):
    omega = cfg.weight_matrix
    P = cfg.p_max
    rho, gamma, y, z = state.rho, state.gamma, state.y, state.z
    g = direct_gains(gains)

    if form == ObjectiveForm.LINEAR:
        w = 2.0 * omega * y
    else:
        Rq = rate_quadratic(gains, rho, gamma, z, cfg)
        positive = (F.value(Rq) > _POSITIVE_RATE).astype(float)
        safe_rate = Rq * positive + (1.0 - positive)
        w = positive * omega * y / F.sqrt(safe_rate)

    A = w * z * F.sqrt(nats_scale(cfg) * (1.0 + gamma) * g * P)
    q = w * z * z
    lead = F.value(q).shape[:-2]
    M, K = cfg.shape
    coupling_t = np.swapaxes(coupling_matrix(gains), -1, -2) * P
    cross = F.reshape(coupling_t @ F.reshape(q, lead + (M * K, 1)), lead + (M, K))
    D = q * g * P + omega * y * y * P + cross
    return A, D


def _printed_candidate(gains, state: CfState, cfg: NetworkConfig):
    P = cfg.p_max
    rho, gamma, y, z = state.rho, state.gamma, state.y, state.z
    g = direct_gains(gains)
    I = interference(gains, rho, cfg)
    lead = (z * (1.0 + gamma) * g * P) * (z * (1.0 + gamma) * g * P)
    inner = F.log2(1.0 + gamma) + gamma + z * z * (1.0 - I - cfg.noise_power)
    numerator = lead - y * y * inner
    A = numerator * numerator
    D = 4.0 * (y * y) * (y * y) * z * z * (1.0 + gamma) * g * P
    return A, D


def update_rho_closedform(
    G: GainsLike,
    state: CfState,
    cfg: NetworkConfig,
    form: ObjectiveForm = ObjectiveForm.SQRT,
    variant: ClosedFormVariant = ClosedFormVariant.DERIVED,
) -> ClosedFormUpdate:
    """
    Closed-form rho: per-entry stationary point capped at 1, then projected
    onto the per-BS budget.

    Entries whose stationarity equation degenerates (zero numerator or
    denominator, e.g. ``y = 0``) are set to 0 and flagged in ``degenerate``.
    With the LINEAR form the update is the exact per-entry maximizer of the
    linear objective; with SQRT its fixed points are stationary points of the
    SQRT objective.
    """
    gains = gain_array(G)
    check_shapes(gains, state.rho, cfg)
    printed = variant == ClosedFormVariant.PRINTED
    A, D = _printed_candidate(gains, state, cfg) if printed else _derived_candidate(gains, state, cfg, form)

    degenerate = (F.value(A) <= 0) | (F.value(D) <= 0) | ~np.isfinite(F.value(D))
    ok = (~degenerate).astype(float)
    ratio = (A * ok) / (D * ok + (1.0 - ok))
    if not printed:
        ratio = ratio * ratio
    rho = budget_projection(F.clamp(ratio, 0.0, 1.0))
    return ClosedFormUpdate(rho=rho, degenerate=degenerate)


@dataclass(frozen=True)
class ClosedFormStep:
    rho: Any
    step: np.ndarray
    stalled: np.ndarray
    degenerate: np.ndarray


def closedform_step(
    G: GainsLike,
    state: CfState,
    cfg: NetworkConfig,
    form: ObjectiveForm = ObjectiveForm.SQRT,
    variant: ClosedFormVariant = ClosedFormVariant.DERIVED,
    max_halvings: int = 20,
) -> ClosedFormStep:
    """
    Safeguarded closed-form update.

    Moves from ``state.rho`` towards the closed-form candidate by the largest
    step ``2**-j`` (``j <= max_halvings``) that does not lower wsee; the step is
    chosen per batch element. When no step qualifies the element stays put and
    is reported as stalled. Step sizes are constants of the recorded tape.
    """
    gains = gain_array(G)
    update = update_rho_closedform(gains, state, cfg, form, variant)
    current = np.asarray(F.value(state.rho))
    candidate = np.asarray(F.value(update.rho))

    lead = current.shape[:-2]
    f_current = np.asarray(wsee(gains, current, cfg))
    step = np.zeros(lead)
    pending = np.ones(lead, dtype=bool)
    trial_step = 1.0
    for _ in range(max_halvings + 1):
        trial = candidate * trial_step + current * (1.0 - trial_step)
        accepted = pending & (np.asarray(wsee(gains, trial, cfg)) >= f_current)
        step = np.where(accepted, trial_step, step)
        pending &= ~accepted
        if not pending.any():
            break
        trial_step *= 0.5

    s = step[..., None, None]
    rho = update.rho * s + state.rho * (1.0 - s)
    return ClosedFormStep(rho=rho, step=step, stalled=pending, degenerate=update.degenerate)


def solve_algorithm2(
    G: GainsLike,
    cfg: NetworkConfig,
    opts: Optional[SolverOptions] = None,
    rho_init: Optional[RhoLike] = None,
    logger: Optional[lg.Logger] = None,
) -> SolverReport:
    """
    Run Algorithm 2: ``z`` (with the incoming ``gamma``), ``gamma = sinr``,
    ``y``, then the safeguarded closed-form rho step.

    ``gamma`` starts at ``sinr(rho_init)``. A stalled step taken with a stale
    ``gamma`` does not count towards convergence.
    """
    opts = opts or SolverOptions()
    log = (logger or lg.logger).bind(component="fp_closedform")
    start = time.perf_counter()

    gains = gain_array(G)
    rho = np.array(F.value(as_rho(rho_init if rho_init is not None else uniform_allocation(cfg))), dtype=float)
    check_shapes(gains, rho, cfg)

    gamma = update_gamma(gains, rho, cfg)
    f_prev = float(wsee(gains, rho, cfg))
    trace: list[float] = []
    degenerate = np.zeros(cfg.shape, dtype=bool)
    stalled_steps = 0
    converged = False
    for t in range(1, opts.max_outer_iters + 1):
        z = update_z_cf(gains, rho, gamma, cfg, opts.variant)
        fresh_gamma = update_gamma(gains, rho, cfg)
        stale = not np.array_equal(gamma, fresh_gamma)
        gamma = fresh_gamma
        y = update_y(gains, rho, cfg)

        result = closedform_step(
            gains, CfState(rho, gamma, y, z), cfg, opts.objective_form, opts.variant, opts.cf_max_halvings
        )
        rho = np.asarray(result.rho)
        degenerate |= result.degenerate
        f = float(wsee(gains, rho, cfg))
        trace.append(f)
        log.trace(f"iter {t}: wsee={f:.6e} step={float(result.step):.3g}")

        if bool(result.stalled):
            stalled_steps += 1
            log.debug(f"iter {t}: closed-form step stalled")
            if stale:
                continue
        if has_converged(f, f_prev, opts.epsilon):
            converged = True
            break
        f_prev = f

    elapsed = time.perf_counter() - start
    if degenerate.any():
        log.warning(f"{int(degenerate.sum())} degenerate closed-form entries set to 0")
    log.debug(f"Algorithm 2 finished: {len(trace)} iterations, wsee={trace[-1]:.6e}, converged={converged}")
    return SolverReport(
        rho_final=PowerAllocation(rho),
        objective_trace=trace,
        iterations=len(trace),
        converged=converged,
        wall_time=elapsed,
        algorithm="cf",
        degenerate_entries=[(int(m), int(k)) for m, k in np.argwhere(degenerate)],
        stalled_steps=stalled_steps,
    )
