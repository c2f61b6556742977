"""Core iteration of the Hessian-estimation evolution strategy.

One iteration samples batches of orthogonal directions, evaluates mirrored
offspring pairs around the mean, applies a multiplicative unit-determinant
update to the transformation matrix from the measured curvatures, recombines
the mean with rank-based weights, and adapts the step size by CSA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .linalg import chi_mean, sample_orthogonal, sym_exp
from .objectives import EvalCounter, Objective, evaluate_counted


class NumericalAbort(RuntimeError):
    """Raised when a run produces non-finite values; restart drivers consume it."""


@dataclass(frozen=True)
class StrategyParams:
    """Fixed per-run strategy constants.

    Attributes
    ----------
    dim : int
        Search-space dimension.
    pairs : int
        Number of mirrored sample pairs per iteration (2 * pairs offspring).
    n_batches : int
        Orthogonal direction batches per iteration, ceil(pairs / dim).
    trunc_ratio : float
        Cap on the spread of curvature measurements within one matrix update;
        smaller measurements are clipped up to max / trunc_ratio.
    matrix_lr : float
        Learning rate of the multiplicative transform update, in (0, 1];
        1 overwrites the model curvatures with the measurements.
    c_sigma, d_sigma : float
        CSA smoothing constant and damping.
    weights : numpy.ndarray
        2 * pairs recombination weights, nonincreasing, summing to one.
    mu_eff : float
        Variance-effective selection mass of the mirrored weight differences,
        1 / sum_j (w_j - w_{2*pairs+1-j})^2.
    gradient_mode : str
        "exact" normalizes finite differences by b / ||b||^2 (recovers the
        gradient of quadratics for any direction lengths); "unit" uses
        b / ||b||, which coincides with "exact" only for unit-length
        directions.
    csa_exponent : str
        "grouped" applies the damping to the whole deviation
        (c/d) * (||p||/chi - sqrt(g)); "ungrouped" applies it to the norm term
        only, (c/d) * ||p||/chi - sqrt(g), which has no neutral fixed point.
    """

    dim: int
    pairs: int
    n_batches: int
    trunc_ratio: float
    matrix_lr: float
    c_sigma: float
    d_sigma: float
    weights: np.ndarray
    mu_eff: float
    gradient_mode: str = "exact"
    csa_exponent: str = "grouped"


def _rank_weights(pairs: int) -> np.ndarray:
    raw = np.log(pairs + 0.5) - np.log(np.arange(1, 2 * pairs + 1))
    raw = np.maximum(raw, 0.0)
    return raw / raw.sum()


def _mirrored_mu_eff(weights: np.ndarray) -> float:
    # pairing the best offspring with the worst, as realized on any linear
    # function where mirrored pairs straddle the mean
    pairs = weights.size // 2
    diffs = weights[:pairs] - weights[::-1][:pairs]
    denom = float(np.sum(diffs * diffs))
    return math.inf if denom == 0.0 else 1.0 / denom


def default_params(
    dim: int,
    mode: str = "hees",
    *,
    pairs: int | None = None,
    trunc_ratio: float = 1e3,
    matrix_lr: float = 0.5,
    c_sigma: float | None = None,
    d_sigma: float | None = None,
    weights: np.ndarray | None = None,
    gradient_mode: str = "exact",
    csa_exponent: str = "grouped",
) -> StrategyParams:
    """Build the default strategy constants for ``hees`` or ``qnes`` runs.

    ``qnes`` uses pairs = dim (the smallest multiple of dim, so the directions
    span the whole space every iteration); ``hees`` uses the usual
    population-size heuristic, halved because every pair yields two offspring.
    """
    if dim < 1:
        raise ValueError("dimension must be a positive integer")
    if mode not in ("hees", "qnes"):
        raise ValueError(f"unknown mode {mode!r}; expected 'hees' or 'qnes'")
    if pairs is None:
        if mode == "qnes":
            pairs = dim
        else:
            pairs = max(2, math.ceil((4 + int(3 * math.log(dim))) / 2))
    if pairs < 1:
        raise ValueError("pairs must be a positive integer")
    if mode == "qnes" and pairs % dim != 0:
        raise ValueError("qnes requires pairs to be an integer multiple of dim")
    if not trunc_ratio > 1.0:
        raise ValueError("trunc_ratio must exceed 1")
    if not 0.0 < matrix_lr <= 1.0:
        raise ValueError("matrix_lr must lie in (0, 1]")
    if gradient_mode not in ("exact", "unit"):
        raise ValueError(f"unknown gradient_mode {gradient_mode!r}")
    if csa_exponent not in ("grouped", "ungrouped"):
        raise ValueError(f"unknown csa_exponent {csa_exponent!r}")

    if weights is None:
        weights = _rank_weights(pairs)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (2 * pairs,):
            raise ValueError("weights must have length 2 * pairs")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        if np.any(np.diff(weights) > 0):
            raise ValueError("weights must be nonincreasing")
    mu_eff = _mirrored_mu_eff(weights)
    if math.isinf(mu_eff):
        raise ValueError(
            "mirror-symmetric weights leave the selection mass undefined; "
            "construct StrategyParams directly for degenerate weight vectors"
        )

    if c_sigma is None:
        c_sigma = (mu_eff + 2.0) / (dim + mu_eff + 5.0)
    if d_sigma is None:
        d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (dim + 1.0)) - 1.0) + c_sigma
    if not 0.0 < c_sigma < 1.0:
        raise ValueError("c_sigma must lie in (0, 1)")
    if not d_sigma > 0.0:
        raise ValueError("d_sigma must be positive")

    return StrategyParams(
        dim=dim,
        pairs=pairs,
        n_batches=math.ceil(pairs / dim),
        trunc_ratio=trunc_ratio,
        matrix_lr=matrix_lr,
        c_sigma=c_sigma,
        d_sigma=d_sigma,
        weights=weights,
        mu_eff=mu_eff,
        gradient_mode=gradient_mode,
        csa_exponent=csa_exponent,
    )


def with_pairs(params: StrategyParams, pairs: int) -> StrategyParams:
    """Rebuild parameters for a new pair count, rederiving the derived fields.

    Weights, mu_eff and the CSA constants are recomputed with the standard
    recipes; truncation ratio, learning rate and mode flags carry over.
    """
    weights = _rank_weights(pairs)
    mu_eff = _mirrored_mu_eff(weights)
    c_sigma = (mu_eff + 2.0) / (params.dim + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (params.dim + 1.0)) - 1.0) + c_sigma
    return replace(
        params,
        pairs=pairs,
        n_batches=math.ceil(pairs / params.dim),
        weights=weights,
        mu_eff=mu_eff,
        c_sigma=c_sigma,
        d_sigma=d_sigma,
    )


@dataclass(frozen=True)
class EsState:
    """Distribution state of one optimizer instance.

    The sampling distribution is N(mean, sigma^2 * transform.T @ transform)
    realized as x = mean +/- sigma * transform.T @ b; ``transform`` keeps unit
    determinant so shape and scale stay separated.  ``f_mean`` caches the
    objective value at ``mean``, reused by the curvature measurements of the
    following iteration.
    """

    mean: np.ndarray
    sigma: float
    transform: np.ndarray
    p_sigma: np.ndarray
    g_sigma: float
    iteration: int
    f_mean: float


def init_state(
    objective: Objective,
    counter: EvalCounter,
    mean: np.ndarray,
    sigma: float,
    transform: np.ndarray | None = None,
) -> EsState:
    """Create a fresh optimizer state, evaluating and caching f(mean)."""
    mean = np.asarray(mean, dtype=float)
    dim = mean.size
    if sigma <= 0 or not math.isfinite(sigma):
        raise ValueError("sigma must be positive and finite")
    if transform is None:
        transform = np.eye(dim)
    else:
        transform = np.asarray(transform, dtype=float)
    f_mean = evaluate_counted(objective, counter, mean)
    return EsState(mean, float(sigma), transform, np.zeros(dim), 0.0, 0, f_mean)


@dataclass(frozen=True)
class Generation:
    """One iteration's direction batches, mirrored samples and ranks.

    ``batches`` has shape (n_batches, dim, dim) with rows as directions;
    ``dirs`` flattens the used directions in pair order, so pair ``k`` is
    direction ``k % dim`` of batch ``k // dim``.  Ranks are 1-based over all
    2 * pairs offspring, ties broken by evaluation order (the minus sample of
    a pair before the plus sample, pairs in index order).
    """

    batches: np.ndarray
    dirs: np.ndarray
    x_minus: np.ndarray
    x_plus: np.ndarray
    f_minus: np.ndarray
    f_plus: np.ndarray
    ranks_minus: np.ndarray
    ranks_plus: np.ndarray

    @property
    def pairs(self) -> int:
        return self.dirs.shape[0]


def rank_offspring(f_minus: np.ndarray, f_plus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """1-based ranks of mirrored offspring among the whole generation.

    Ties are broken by evaluation order: within a pair the minus sample comes
    first, and pairs are ordered by index.
    """
    pairs = len(f_minus)
    interleaved = np.empty(2 * pairs)
    interleaved[0::2] = f_minus
    interleaved[1::2] = f_plus
    order = np.argsort(interleaved, kind="stable")
    ranks = np.empty(2 * pairs, dtype=np.int64)
    ranks[order] = np.arange(1, 2 * pairs + 1)
    return ranks[0::2], ranks[1::2]


def sample_generation(
    state: EsState,
    objective: Objective,
    counter: EvalCounter,
    params: StrategyParams,
    rng: np.random.Generator,
) -> Generation:
    """Sample and evaluate one generation of mirrored orthogonal offspring."""
    dim = params.dim
    batches = np.stack([sample_orthogonal(rng, dim) for _ in range(params.n_batches)])
    dirs = batches.reshape(params.n_batches * dim, dim)[: params.pairs]
    # rows are transform.T @ b, so the sampling covariance is
    # sigma^2 * transform.T @ transform
    spread = state.sigma * (dirs @ state.transform)
    x_minus = state.mean - spread
    x_plus = state.mean + spread
    f_minus = np.empty(params.pairs)
    f_plus = np.empty(params.pairs)
    for k in range(params.pairs):
        f_minus[k] = evaluate_counted(objective, counter, x_minus[k])
        f_plus[k] = evaluate_counted(objective, counter, x_plus[k])
    if not (np.all(np.isfinite(f_minus)) and np.all(np.isfinite(f_plus))):
        raise NumericalAbort("non-finite objective value in offspring")
    ranks_minus, ranks_plus = rank_offspring(f_minus, f_plus)
    return Generation(batches, dirs, x_minus, x_plus, f_minus, f_plus, ranks_minus, ranks_plus)


@dataclass(frozen=True)
class MatrixUpdate:
    """Multiplicative transform update and the centering constant it removed.

    ``matrix`` is symmetric positive definite with unit determinant; it is the
    identity (with ``mean_log_curv`` absent) when no direction measured
    positive curvature.  ``mean_log_curv`` is the mean of the log-curvature
    measurements subtracted to keep the determinant at one; its running
    average defines the global curvature scale.
    """

    matrix: np.ndarray
    mean_log_curv: float | None


def matrix_update(
    dirs: np.ndarray,
    f_mean: float,
    f_minus: np.ndarray,
    f_plus: np.ndarray,
    sigma: float,
    params: StrategyParams,
) -> MatrixUpdate:
    """Unit-determinant transform update from mirrored curvature measurements.

    Along each used direction the curvature is estimated by the second
    difference (f+ + f- - 2 f(mean)) / (sigma^2 ||b||^2).  If no direction is
    convex the neutral update (identity) is returned.  Otherwise measurements
    are clipped from below to max / trunc_ratio, log-transformed, centered
    (which enforces det = 1), scaled by -matrix_lr / 2 and assembled into a
    matrix exponential; unused directions contribute nothing, i.e. receive a
    neutral update.
    """
    dim = dirs.shape[1]
    sq_norms = np.sum(dirs * dirs, axis=1)
    curv = (f_plus + f_minus - 2.0 * f_mean) / (sigma * sigma * sq_norms)
    if not np.all(np.isfinite(curv)):
        raise NumericalAbort("non-finite curvature measurement")
    top = curv.max()
    if top <= 0.0:
        return MatrixUpdate(np.eye(dim), None)
    curv = np.maximum(curv, top / params.trunc_ratio)
    logs = np.log(curv)
    mean_log_curv = float(logs.mean())
    scaled = (logs - mean_log_curv) * (-0.5 * params.matrix_lr)
    exponent = (dirs * (scaled / sq_norms)[:, None]).T @ dirs / params.n_batches
    return MatrixUpdate(sym_exp(exponent), mean_log_curv)


def recombine_mean(gen: Generation, params: StrategyParams) -> np.ndarray:
    """Weighted recombination of all offspring, weight indexed by rank."""
    w = params.weights
    return w[gen.ranks_minus - 1] @ gen.x_minus + w[gen.ranks_plus - 1] @ gen.x_plus


def csa_update(
    state: EsState, gen: Generation, params: StrategyParams
) -> tuple[np.ndarray, float, float]:
    """Cumulative step-size adaptation; returns (path, path variance, sigma).

    The path accumulates the selection-weighted direction differences of the
    mirrored pairs.  The variance accumulator tracks the expected squared path
    norm under neutral selection, so the step-size exponent compares the
    realized path length against an unbiased reference even before the path
    has warmed up.
    """
    c = params.c_sigma
    g_new = (1.0 - c) ** 2 * state.g_sigma + c * (2.0 - c)
    dw = params.weights[gen.ranks_plus - 1] - params.weights[gen.ranks_minus - 1]
    path = (1.0 - c) * state.p_sigma + math.sqrt(c * (2.0 - c) * params.mu_eff) * (dw @ gen.dirs)
    ratio = float(np.linalg.norm(path)) / chi_mean(params.dim)
    if params.csa_exponent == "grouped":
        arg = (c / params.d_sigma) * (ratio - math.sqrt(g_new))
    else:
        arg = (c / params.d_sigma) * ratio - math.sqrt(g_new)
    return path, g_new, state.sigma * math.exp(arg)


def _check_finite(state: EsState) -> None:
    finite = (
        np.all(np.isfinite(state.mean))
        and np.all(np.isfinite(state.transform))
        and np.all(np.isfinite(state.p_sigma))
        and math.isfinite(state.sigma)
        and state.sigma > 0.0
        and math.isfinite(state.f_mean)
    )
    if not finite:
        raise NumericalAbort("non-finite optimizer state")


def hees_iteration(
    state: EsState,
    objective: Objective,
    counter: EvalCounter,
    params: StrategyParams,
    rng: np.random.Generator,
) -> tuple[EsState, Generation, MatrixUpdate]:
    """One full HE-ES iteration; costs 2 * pairs + 1 evaluations.

    The cached f(mean) feeds the curvature measurements, the transform is
    updated multiplicatively, the mean is recombined from the ranked
    offspring, CSA adapts the step size, and the new mean is evaluated and
    cached for the next iteration.
    """
    gen = sample_generation(state, objective, counter, params, rng)
    update = matrix_update(gen.dirs, state.f_mean, gen.f_minus, gen.f_plus, state.sigma, params)
    transform = update.matrix @ state.transform
    mean = recombine_mean(gen, params)
    p_sigma, g_sigma, sigma = csa_update(state, gen, params)
    f_mean = evaluate_counted(objective, counter, mean)
    new_state = EsState(mean, sigma, transform, p_sigma, g_sigma, state.iteration + 1, f_mean)
    _check_finite(new_state)
    return new_state, gen, update
