"""Run orchestration: stopping criteria, stagnation detection, IPOP restarts."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .hees import (
    EsState,
    NumericalAbort,
    StrategyParams,
    hees_iteration,
    init_state,
    with_pairs,
)
from .objectives import EvalCounter, Objective
from .qn import CurvatureWindow, SwitchState, qnes_iteration
from .runlog import IterationRecord, RunLog

TARGET_REACHED = "target-reached"
BUDGET_EXHAUSTED = "budget-exhausted"
STAGNATION = "stagnation"
NUMERICAL_ABORT = "numerical-abort"
MAX_RESTARTS = "max-restarts"

# state-health limits beyond which a run is aborted rather than continued
_DET_ABORT = 1e-3
_SIGMA_UNDERFLOW = 1e-300


@dataclass(frozen=True)
class StoppingCriteria:
    """When a run ends.

    ``stagnation_window`` defaults to 50 + 10 * dim iterations when ``None``;
    ``stagnation_tol`` is the minimal relative improvement of the best value
    over that window (``None`` disables stagnation detection).
    """

    max_evals: int
    target_gap: float = 1e-20
    stagnation_window: int | None = None
    stagnation_tol: float | None = 1e-12


def default_stop(dim: int, target_gap: float = 1e-20) -> StoppingCriteria:
    """Default stopping criteria: 1e5 * dim evaluation budget."""
    return StoppingCriteria(max_evals=100_000 * dim, target_gap=target_gap)


@dataclass(frozen=True)
class RestartPolicy:
    """IPOP restart policy: double the pair count on stagnation or abort."""

    enabled: bool = True
    multiplier: int = 2
    max_restarts: int = 8


def detect_stagnation(f_best_window, stop: StoppingCriteria) -> bool:
    """True iff the best value improved less than the tolerance over the window.

    The improvement is compared against the relative tolerance of the window's
    first value, with an absolute floor of 1e-30 near zero; improvement exactly
    at the threshold does not count as stagnation.
    """
    first = f_best_window[0]
    last = f_best_window[-1]
    threshold = max(stop.stagnation_tol * abs(first), 1e-30)
    return (first - last) < threshold


class _Best:
    """Tracks the best value seen by any evaluation of one run."""

    __slots__ = ("value",)

    def __init__(self) -> None:
        self.value = math.inf

    def observe(self, value: float) -> None:
        if value < self.value:
            self.value = value


def _tracked(objective: Objective, best: _Best) -> Objective:
    base = objective.fn

    def fn(x):
        value = base(x)
        best.observe(value)
        return value

    return replace(objective, fn=fn)


def _resolve_window(stop: StoppingCriteria, dim: int) -> int:
    return stop.stagnation_window if stop.stagnation_window is not None else 50 + 10 * dim


def _run_segment(
    kind: str,
    objective: Objective,
    counter: EvalCounter,
    best: _Best,
    params: StrategyParams,
    stop: StoppingCriteria,
    rng: np.random.Generator,
    *,
    mean0: np.ndarray | None,
    sigma0: float,
    init_low: float,
    init_high: float,
    segment: int,
) -> tuple[list[IterationRecord], str | None, tuple]:
    """Run one restart segment until a stopping condition fires.

    Returns the records, the termination reason of the segment, and the final
    optimizer state.  Stagnation and numerical aborts terminate the segment
    but may be continued by a restart wrapper.
    """
    dim = objective.dim
    window_len = _resolve_window(stop, dim)
    if mean0 is None:
        mean0 = rng.uniform(init_low, init_high, dim)
    records: list[IterationRecord] = []
    f_best_history: list[float] = []
    reason: str | None = None

    state = init_state(objective, counter, mean0, sigma0)
    curv_window = CurvatureWindow()
    switch = SwitchState()

    while True:
        if counter.count >= stop.max_evals:
            reason = BUDGET_EXHAUSTED
            break
        try:
            if kind == "qnes":
                state, curv_window, switch, step_rec = qnes_iteration(
                    state, curv_window, switch, objective, counter, params, rng
                )
                rate = switch.rate
                step_type = step_rec.step_type
                eta = step_rec.scale
            else:
                state, _, _ = hees_iteration(state, objective, counter, params, rng)
                rate = None
                step_type = "recombination"
                eta = None
            det_err = abs(float(np.linalg.det(state.transform)) - 1.0)
            if det_err > _DET_ABORT:
                raise NumericalAbort("transform determinant drifted away from one")
            if state.sigma < _SIGMA_UNDERFLOW:
                raise NumericalAbort("step size underflow")
        except NumericalAbort:
            reason = NUMERICAL_ABORT
            break

        gap = objective.gap(best.value)
        records.append(
            IterationRecord(
                iteration=state.iteration,
                evals=counter.count,
                gap=gap,
                f_mean=state.f_mean,
                sigma=state.sigma,
                det_err=det_err,
                rate=rate,
                step_type=step_type,
                eta=eta,
                segment=segment,
            )
        )
        f_best_history.append(best.value)
        if gap is not None and gap <= stop.target_gap:
            reason = TARGET_REACHED
            break
        if (
            stop.stagnation_tol is not None
            and len(f_best_history) > window_len
            and detect_stagnation(f_best_history[-(window_len + 1):], stop)
        ):
            reason = STAGNATION
            break

    final = (state, curv_window, switch) if kind == "qnes" else (state,)
    return records, reason, final


def _validate_kind(kind: str, params: StrategyParams) -> None:
    if kind not in ("hees", "qnes"):
        raise ValueError(f"unknown algorithm kind {kind!r}; expected 'hees' or 'qnes'")
    if kind == "qnes" and params.pairs % params.dim != 0:
        raise ValueError("qnes requires the pair count to be a multiple of the dimension")


def run(
    kind: str,
    objective: Objective,
    params: StrategyParams,
    stop: StoppingCriteria,
    seed: int,
    *,
    mean0: np.ndarray | None = None,
    sigma0: float = 2.0,
    init_low: float = -4.0,
    init_high: float = 4.0,
) -> RunLog:
    """Single optimization run, deterministic in the seed.

    When ``mean0`` is not given it is drawn uniformly from the init box.
    Numerical aborts are recorded as the termination reason, not raised.
    """
    _validate_kind(kind, params)
    best = _Best()
    tracked = _tracked(objective, best)
    counter = EvalCounter()
    rng = np.random.default_rng(seed)
    records, reason, final = _run_segment(
        kind, tracked, counter, best, params, stop, rng,
        mean0=mean0, sigma0=sigma0, init_low=init_low, init_high=init_high, segment=0,
    )
    return RunLog(
        records=records,
        benchmark=objective.name,
        dim=objective.dim,
        kind=kind,
        seed=seed,
        params=params,
        reason=reason,
        final=final,
    )


def ipop_run(
    kind: str,
    objective: Objective,
    base_params: StrategyParams,
    stop: StoppingCriteria,
    policy: RestartPolicy,
    seed: int,
    *,
    sigma0: float = 2.0,
    init_low: float = -4.0,
    init_high: float = 4.0,
) -> RunLog:
    """Restart wrapper doubling the pair count on stagnation or abort.

    Each segment re-initializes the optimizer from scratch (fresh mean from
    the init box, reset step size, identity transform, empty curvature window,
    neutral switch) with an independent random stream split off the seed.
    The evaluation budget is shared across all segments.
    """
    if not policy.enabled:
        raise ValueError("ipop_run requires an enabled restart policy")
    _validate_kind(kind, base_params)
    best = _Best()
    tracked = _tracked(objective, best)
    counter = EvalCounter()
    seed_seq = np.random.SeedSequence(seed)
    params = base_params
    records: list[IterationRecord] = []
    reason: str | None = None
    final: tuple = ()
    segment = 0

    while True:
        rng = np.random.default_rng(seed_seq.spawn(1)[0])
        seg_records, seg_reason, final = _run_segment(
            kind, tracked, counter, best, params, stop, rng,
            mean0=None, sigma0=sigma0, init_low=init_low, init_high=init_high,
            segment=segment,
        )
        records.extend(seg_records)
        if seg_reason in (TARGET_REACHED, BUDGET_EXHAUSTED):
            reason = seg_reason
            break
        # segment ended by stagnation or numerical abort: restart if allowed
        if segment >= policy.max_restarts:
            reason = MAX_RESTARTS
            break
        params = with_pairs(params, params.pairs * policy.multiplier)
        segment += 1

    return RunLog(
        records=records,
        benchmark=objective.name,
        dim=objective.dim,
        kind=kind,
        seed=seed,
        params=base_params,
        reason=reason,
        final=final,
    )
