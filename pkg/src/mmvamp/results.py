"""Result containers shared by the message-passing solvers."""

from dataclasses import dataclass, field

import numpy as np

# Reported NSE is clipped here when the estimate matches the truth exactly.
NSE_FLOOR_DB = -200.0


@dataclass(frozen=True)
class IterationRecord:
    """One per-sweep snapshot of a solver run.

    ``nse_db`` is NaN when the solver was run without a ground-truth
    reference. ``sigma_trace`` and ``gamma_trace`` are the mean diagonals of
    the effective-noise and error covariances the sweep worked with.
    """

    iteration: int
    nse_db: float
    sigma_trace: float
    gamma_trace: float
    wallclock_us: int


@dataclass
class SolveResult:
    """Final estimate plus the per-iteration trace of one solver run.

    ``converged`` marks a tolerance stop; ``failed`` marks a non-finite abort
    (the best finite iterate is still returned). Neither raises.
    """

    estimate: np.ndarray
    weights: np.ndarray
    iterations: list = field(default_factory=list)
    converged: bool = False
    failed: bool = False
    message: str = ""

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    def nse_trace(self) -> np.ndarray:
        return np.array([rec.nse_db for rec in self.iterations])
