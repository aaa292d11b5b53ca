from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gbf.signals import PiecewiseLinearSignal


@dataclass
class FalsificationResult:
    """Outcome of one search run; ``falsified`` iff ``best_robustness < 0``."""

    falsified: bool
    best_robustness: float
    witness_x0: np.ndarray
    witness_w: PiecewiseLinearSignal
    num_sims: int
    wall_time: float
    gd_invocations: int = 0
    lin_rhs_calls: int = 0
    iterations: int = 0
    method: str = ""
    seed: int | None = None
    stop_reason: str = ""
    history: list[float] = field(default_factory=list, repr=False)
    failures: list[str] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.falsified != (self.best_robustness < 0):
            raise ValueError("falsified flag disagrees with the sign of the best robustness")
