"""Quasi-Newton extension: gradient estimation, curvature scale, step switch.

The mean update of the base strategy is replaced by a choice between weighted
recombination and a quasi-Newton step built from a central-difference gradient
estimate and a windowed global curvature scale.  An exponentially fading win
rate decides how often each step type is sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hees import (
    EsState,
    Generation,
    NumericalAbort,
    StrategyParams,
    _check_finite,
    csa_update,
    matrix_update,
    recombine_mean,
    sample_generation,
)
from .objectives import EvalCounter, Objective, evaluate_counted

RECOMBINATION = "recombination"
QUASI_NEWTON = "quasi-newton"


@dataclass(frozen=True)
class CurvatureWindow:
    """Ring buffer of the last few mean log-curvature measurements.

    The transform update keeps unit determinant by subtracting the mean of the
    log-curvatures it measures; those subtracted means are exactly the
    information lost about the absolute curvature.  Averaging them over a
    short window and exponentiating recovers the global curvature scale.
    """

    values: tuple[float, ...] = ()
    capacity: int = 20

    def push(self, value: float) -> "CurvatureWindow":
        """Append a measurement, evicting the oldest beyond capacity."""
        if not math.isfinite(value):
            raise ValueError("curvature measurement must be finite")
        vals = (self.values + (float(value),))[-self.capacity:]
        return CurvatureWindow(vals, self.capacity)

    def __len__(self) -> int:
        return len(self.values)

    def scale(self) -> float:
        """Global curvature scale exp(-window average).

        With a unit-determinant transform this is the scalar that restores the
        absolute magnitude of the inverse Hessian: for f = x^T H x / 2 it
        converges to det(H^-1)^(1/d).
        """
        if not self.values:
            raise ValueError("curvature window is empty; no scale estimate available")
        return math.exp(-sum(self.values) / len(self.values))


@dataclass(frozen=True)
class SwitchState:
    """Exponentially fading rate at which quasi-Newton steps win comparisons."""

    rate: float = 0.5


def switch_probabilities(rate: float) -> tuple[float, float]:
    """Sampling probabilities (recombination, quasi-Newton) for a win rate.

    Both are 2.5 times the respective share, clipped to [0.01, 1]; by
    construction at least one of the two is exactly one, so a step can always
    be taken.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    p_rec = min(max(2.5 * (1.0 - rate), 0.01), 1.0)
    p_qn = min(max(2.5 * rate, 0.01), 1.0)
    return p_rec, p_qn


def switch_update(rate: float, winner: str) -> float:
    """Fade the win rate toward the outcome of one head-to-head comparison."""
    if winner == RECOMBINATION:
        return 0.8 * rate
    if winner == QUASI_NEWTON:
        return 0.8 * rate + 0.2
    raise ValueError(f"unknown winner {winner!r}")


def estimate_gradient(
    gen: Generation, sigma: float, n_batches: int, mode: str = "exact"
) -> np.ndarray:
    """Central-difference gradient estimate in the sampling frame.

    Combines the mirrored value differences along each direction; with at
    least dim pairs the directions span the whole space, otherwise only a
    random projection of the gradient could be recovered and an error is
    raised.  Mode "exact" divides each direction by its squared norm, the
    inverse orthogonal expansion, which reproduces the gradient of any
    quadratic exactly; mode "unit" divides by the norm, which coincides only
    for unit-length directions and otherwise weights each component by the
    direction length.
    """
    dim = gen.dirs.shape[1]
    if gen.pairs < dim:
        raise ValueError("gradient estimation needs at least dim mirrored pairs")
    diffs = gen.f_plus - gen.f_minus
    sq_norms = np.sum(gen.dirs * gen.dirs, axis=1)
    if mode == "exact":
        coeff = diffs / sq_norms
    elif mode == "unit":
        coeff = diffs / np.sqrt(sq_norms)
    else:
        raise ValueError(f"unknown gradient mode {mode!r}")
    return (coeff @ gen.dirs) / (2.0 * sigma * n_batches)


def qn_step(transform: np.ndarray, grad: np.ndarray, scale: float) -> np.ndarray:
    """Quasi-Newton mean step -scale * transform.T @ grad.

    The inverse Hessian model is scale * transform @ transform.T applied to
    the back-transformed gradient; the transforms cancel so no inversion or
    solve is needed.
    """
    return -scale * (transform.T @ grad)


@dataclass(frozen=True)
class StepRecord:
    """What the mean update of one iteration did.

    ``taken`` lists the step types that were sampled; ``winner`` is
    "only-one-active" unless both were evaluated head-to-head.  ``grad`` is
    the estimated sampling-frame gradient, ``scale`` the global curvature
    scale and ``step`` the proposed quasi-Newton step (both absent while no
    scale estimate exists).
    """

    grad: np.ndarray
    scale: float | None
    step: np.ndarray | None
    taken: tuple[str, ...]
    winner: str

    @property
    def step_type(self) -> str:
        if self.taken == (RECOMBINATION,):
            return RECOMBINATION
        if self.taken == (QUASI_NEWTON,):
            return QUASI_NEWTON
        return "both-qn-won" if self.winner == QUASI_NEWTON else "both-recomb-won"


def qnes_iteration(
    state: EsState,
    window: CurvatureWindow,
    switch: SwitchState,
    objective: Objective,
    counter: EvalCounter,
    params: StrategyParams,
    rng: np.random.Generator,
) -> tuple[EsState, CurvatureWindow, SwitchState, StepRecord]:
    """One QN-ES iteration: the HE-ES body with a switched mean update.

    Sampling, the transform update and CSA run exactly as in the base
    strategy.  The mean update draws step-type activations from the switch
    probabilities; when both types are active, both candidate means are
    evaluated, the better one is kept (the other evaluation is discarded) and
    the win rate is updated.  The quasi-Newton branch is suppressed while no
    curvature-scale estimate exists or when the transform update was neutral
    this iteration.  When a quasi-Newton step is accepted, the step size is
    clipped to scale * ||grad|| so it cannot lag behind the jump.

    Costs 2 * pairs + 1 evaluations, or 2 * pairs + 2 when both step types
    are tested.
    """
    gen = sample_generation(state, objective, counter, params, rng)
    update = matrix_update(gen.dirs, state.f_mean, gen.f_minus, gen.f_plus, state.sigma, params)
    transform = update.matrix @ state.transform
    if update.mean_log_curv is not None:
        window = window.push(update.mean_log_curv)
    p_sigma, g_sigma, sigma_csa = csa_update(state, gen, params)

    grad = estimate_gradient(gen, state.sigma, params.n_batches, params.gradient_mode)
    qn_ready = update.mean_log_curv is not None and len(window) > 0
    scale = step = mean_qn = None
    if qn_ready:
        scale = window.scale()
        # the step lives in the frame the samples were drawn in
        step = qn_step(state.transform, grad, scale)
        mean_qn = state.mean + step

    if not qn_ready:
        rec_active, qn_active = True, False
    else:
        p_rec, p_qn = switch_probabilities(switch.rate)
        rec_active = rng.random() < p_rec
        qn_active = rng.random() < p_qn

    f_rec = f_qn = None
    if rec_active:
        mean_rec = recombine_mean(gen, params)
        f_rec = evaluate_counted(objective, counter, mean_rec)
    if qn_active:
        f_qn = evaluate_counted(objective, counter, mean_qn)

    if rec_active and qn_active:
        taken = (RECOMBINATION, QUASI_NEWTON)
        winner = QUASI_NEWTON if f_qn < f_rec else RECOMBINATION
        switch = SwitchState(switch_update(switch.rate, winner))
        qn_accepted = winner == QUASI_NEWTON
    elif qn_active:
        taken, winner, qn_accepted = (QUASI_NEWTON,), "only-one-active", True
    else:
        taken, winner, qn_accepted = (RECOMBINATION,), "only-one-active", False

    if qn_accepted:
        mean_new, f_new = mean_qn, f_qn
        sigma_new = min(sigma_csa, scale * float(np.linalg.norm(grad)))
    else:
        mean_new, f_new = mean_rec, f_rec
        sigma_new = sigma_csa

    new_state = EsState(mean_new, sigma_new, transform, p_sigma, g_sigma,
                        state.iteration + 1, f_new)
    _check_finite(new_state)
    record = StepRecord(grad, scale, step, taken, winner)
    return new_state, window, switch, record
