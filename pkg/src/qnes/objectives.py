"""Benchmark objective functions and counted evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Objective:
    """A scalar minimization problem with optional optimum metadata.

    ``f_star``/``x_star`` are the optimal value and location when known
    (``None`` otherwise).  ``gap_fn`` optionally maps a raw objective value to
    the optimality gap; it is used for problems such as the logarithmic sphere
    whose optimal value is not finite but whose gap still has a natural
    definition.
    """

    name: str
    dim: int
    fn: Callable[[np.ndarray], float]
    f_star: float | None = None
    x_star: np.ndarray | None = None
    gap_fn: Callable[[float], float] | None = None

    def __call__(self, x: np.ndarray) -> float:
        return float(self.fn(np.asarray(x, dtype=float)))

    def gap(self, value: float) -> float | None:
        """Optimality gap of a raw objective value, or ``None`` if undefined."""
        if self.gap_fn is not None:
            return float(self.gap_fn(value))
        if self.f_star is None or not math.isfinite(self.f_star):
            return None
        return float(value - self.f_star)


class EvalCounter:
    """Counts objective evaluations; confined to a single run."""

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def __repr__(self) -> str:
        return f"EvalCounter(count={self.count})"


def evaluate_counted(objective: Objective, counter: EvalCounter, x: np.ndarray) -> float:
    """Evaluate ``objective`` at ``x``, incrementing ``counter`` exactly once."""
    x = np.asarray(x, dtype=float)
    if x.shape != (objective.dim,):
        raise ValueError(
            f"expected a vector of dimension {objective.dim}, got shape {x.shape}"
        )
    counter.count += 1
    return float(objective.fn(x))


# --- benchmark definitions -------------------------------------------------

def _sphere(x):
    return float(x @ x)


def _ellipsoid(x):
    d = x.size
    return float(10.0 ** (6.0 * np.arange(d) / (d - 1)) @ (x * x))


def _discus(x):
    return float(1e6 * x[0] * x[0] + x[1:] @ x[1:])


def _cigar(x):
    return float(x[0] * x[0] + 1e6 * (x[1:] @ x[1:]))


def _rosenbrock(x):
    # shifted so the optimum sits at the origin
    head, tail = x[:-1], x[1:]
    return float(np.sum(100.0 * (tail - 2.0 * head - head * head) ** 2 + head * head))


def _log_sphere(x):
    with np.errstate(divide="ignore"):
        return float(np.log(x @ x))


def _one_norm(x):
    return float(np.sum(np.abs(x)))


def _sum_of_different_powers(x):
    d = x.size
    exponents = 2.0 + 4.0 * np.arange(d) / (d - 1)
    return float(np.sqrt(np.sum(np.abs(x) ** exponents)))


def _happycat(x):
    d = x.size
    sq = float(x @ x)
    return float(abs(sq - d) ** 0.5 + (0.5 * sq + np.sum(x)) / d + 0.5)


BENCHMARK_NAMES = (
    "sphere",
    "ellipsoid",
    "discus",
    "cigar",
    "rosenbrock",
    "log-sphere",
    "one-norm",
    "sum-of-different-powers",
    "happycat",
)

_EVALUATORS = {
    "sphere": _sphere,
    "ellipsoid": _ellipsoid,
    "discus": _discus,
    "cigar": _cigar,
    "rosenbrock": _rosenbrock,
    "log-sphere": _log_sphere,
    "one-norm": _one_norm,
    "sum-of-different-powers": _sum_of_different_powers,
    "happycat": _happycat,
}

# functions defined for d = 1; everything else needs d >= 2
_MIN_DIM_ONE = frozenset({"sphere", "log-sphere", "one-norm"})


def make_benchmark(name: str, dim: int) -> Objective:
    """Build one of the named benchmark problems in dimension ``dim``.

    All problems have their optimum at the origin, except happycat whose
    minimizer is the all-minus-one vector.  The logarithmic sphere is unbounded
    below; its gap is measured as exp(f) = ||x||^2, i.e. through the sphere
    problem sharing its level sets.
    """
    if name not in _EVALUATORS:
        known = ", ".join(BENCHMARK_NAMES)
        raise ValueError(f"unknown benchmark {name!r}; choose one of: {known}")
    min_dim = 1 if name in _MIN_DIM_ONE else 2
    if dim < min_dim:
        raise ValueError(f"benchmark {name!r} requires dimension >= {min_dim}")

    if name == "happycat":
        x_star = -np.ones(dim)
    else:
        x_star = np.zeros(dim)
    if name == "log-sphere":
        return Objective(name, dim, _log_sphere, -math.inf, x_star, gap_fn=math.exp)
    return Objective(name, dim, _EVALUATORS[name], 0.0, x_star)
