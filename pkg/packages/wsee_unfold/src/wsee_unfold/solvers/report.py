from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from wsee_unfold.netmodel.allocation import PowerAllocation


@dataclass(frozen=True)
class SolverReport:
    """Outcome of one solver run; ``objective_trace`` holds wsee(rho_t) per outer iteration."""

    rho_final: PowerAllocation
    objective_trace: List[float]
    iterations: int
    converged: bool
    wall_time: Optional[float]
    algorithm: str
    degraded: bool = False
    degenerate_entries: List[Tuple[int, int]] = field(default_factory=list)
    stalled_steps: int = 0

    @property
    def final_wsee(self) -> float:
        return self.objective_trace[-1]

    def to_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "algorithm": self.algorithm,
            "objective_trace": list(self.objective_trace),
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time_s": self.wall_time if include_timing else None,
            "rho": self.rho_final.to_list(),
            "degraded": self.degraded,
        }
        if self.algorithm == "cf":
            data["degenerate_entries"] = [list(e) for e in self.degenerate_entries]
            data["stalled_steps"] = self.stalled_steps
        return data

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2)
