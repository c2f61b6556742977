"""Run records shared by the driver and the experiment harness."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class IterationRecord:
    """One iteration's worth of convergence data.

    ``gap`` is the best-so-far optimality gap over every evaluation made up to
    the end of the iteration (``None`` when the optimum is unknown); ``rate``
    is the quasi-Newton win rate (``None`` for plain HE-ES runs), ``eta`` the
    global curvature scale when an estimate exists, and ``segment`` the
    restart segment index.
    """

    iteration: int
    evals: int
    gap: float | None
    f_mean: float
    sigma: float
    det_err: float
    rate: float | None
    step_type: str
    eta: float | None
    segment: int


@dataclass
class RunLog:
    """Per-iteration records plus run metadata.

    Invariants: ``evals`` is strictly increasing and ``gap`` nonincreasing
    across the whole log, including across restart segments.  ``final`` holds
    the terminal optimizer state (state, curvature window, switch state) for
    inspection; it is not serialized.
    """

    records: list[IterationRecord] = field(default_factory=list)
    benchmark: str | None = None
    dim: int | None = None
    kind: str | None = None
    seed: int | None = None
    params: Any = None
    reason: str | None = None
    final: Any = None

    def gaps(self) -> np.ndarray:
        """Best-so-far gap series; raises if the optimum is unknown."""
        if any(r.gap is None for r in self.records):
            raise ValueError("gap series undefined: optimum unknown for this run")
        return np.array([r.gap for r in self.records])

    @property
    def evals(self) -> int:
        return self.records[-1].evals if self.records else 0
