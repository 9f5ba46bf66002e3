from __future__ import annotations

from typing import Any, Dict, Mapping, Optional

import numpy as np

from wsee_unfold.autodiff.tape import Tape


def grad_check(tape: Tape, inputs: Optional[Mapping[str, Any]] = None, h: float = 1e-5) -> float:
    """
    Compare the tape's reverse-mode gradient with central differences.

    Every coordinate of every declared input is perturbed by ``±h``. The error
    of a coordinate is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``
    where ``floor`` is ``1e-8`` times the largest analytic entry (at least 1e-8),
    so exact zeros compare as zero error.

    Args:
        tape: A tape with a scalar output.
        inputs: Point to check at; inputs not given keep their current values.
        h: Finite-difference step.

    Returns:
        The worst relative error over all coordinates. The tape is left
        evaluated at the check point.
    """
    base: Dict[str, np.ndarray] = {
        name: np.array(node.value, dtype=float) for name, node in tape.inputs.items()
    }
    if inputs:
        base.update({name: np.array(val, dtype=float) for name, val in inputs.items()})

    tape.forward(base)
    analytic = tape.backward()
    largest = max((float(np.max(np.abs(g))) for g in analytic.values() if g.size), default=0.0)
    floor = 1e-8 * max(1.0, largest)

    worst = 0.0
    for name, point in base.items():
        numeric = np.zeros_like(point)
        for idx in np.ndindex(point.shape):
            shifted = point.copy()
            shifted[idx] = point[idx] + h
            f_plus = float(np.sum(tape.forward({**base, name: shifted})))
            shifted[idx] = point[idx] - h
            f_minus = float(np.sum(tape.forward({**base, name: shifted})))
            numeric[idx] = (f_plus - f_minus) / (2.0 * h)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - numeric) / denom)))

    tape.forward(base)
    return worst
