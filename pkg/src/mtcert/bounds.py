"""Per-task lower confidence bounds from finite rollout statistics.

Each bound maps the statistics of ``m`` i.i.d. rollouts in one task to a
value that lies below the task's true mean performance with probability at
least ``1 - beta``.

Rollout statistics are taken at face value. When trajectories are
truncated, each recorded value must come from a monotone metric evaluated
on the observed prefix, i.e. it may never exceed the metric of the full
trajectory. Only then does a lower bound on the recorded values' mean also
bound the true performance. This cannot be checked from the data and is the
caller's obligation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from mtcert.numerics import beta_quantile

# Closed-interval tolerance for real-valued statistics.
RANGE_TOL = 1e-9


class BoundError(ValueError):
    """Statistics do not fit the requested bound."""


@dataclass(frozen=True)
class BinaryStats:
    successes: int
    trials: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.successes <= self.trials:
            raise ValueError(f"successes must lie in [0, {self.trials}], got {self.successes}")

    @property
    def m(self) -> int:
        return self.trials

    @property
    def mean(self) -> float:
        return self.successes / self.trials


@dataclass(frozen=True)
class RealStats:
    """Bounded real-valued rollout statistics in ``[lo, hi]``.

    Values within ``RANGE_TOL`` outside the range are clipped onto it;
    anything further out is rejected.
    """

    values: tuple
    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("at least one rollout value is required")
        for v in vals:
            if not (self.lo - RANGE_TOL <= v <= self.hi + RANGE_TOL):
                raise ValueError(f"value {v!r} outside declared range [{self.lo}, {self.hi}]")
        object.__setattr__(self, "values", tuple(min(self.hi, max(self.lo, v)) for v in vals))

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return math.fsum(self.values) / len(self.values)

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


RolloutStats = Union[BinaryStats, RealStats]


class Method(str, enum.Enum):
    CLOPPER_PEARSON = "cp"
    HOEFFDING = "hoeffding"
    EMPIRICAL_BERNSTEIN = "bernstein"
    DKW_DISCRETE = "dkw"
    DKW_INTEGRAL = "dkw-integral"

    @property
    def binary(self) -> bool:
        return self is Method.CLOPPER_PEARSON


@dataclass(frozen=True)
class BoundSpec:
    method: Method
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta!r}")


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    stats: RolloutStats

    def __post_init__(self):
        if not self.task_id:
            raise ValueError("task_id must be nonempty")


@dataclass(frozen=True)
class PerTaskBound:
    task_id: str
    lower_bound: float
    method: Method
    m: int


def _check_beta(beta: float) -> None:
    if not 0.0 < beta < 1.0:
        raise BoundError(f"beta must lie in (0, 1), got {beta!r}")


def _require_real(stats, method: str) -> RealStats:
    if not isinstance(stats, RealStats):
        raise BoundError(f"{method} needs bounded real-valued statistics, got {type(stats).__name__}")
    return stats


def clopper_pearson_lower(stats: BinaryStats, beta: float) -> float:
    """One-sided exact binomial lower bound: the beta-quantile of Beta(s, m-s+1)."""
    if not isinstance(stats, BinaryStats):
        raise BoundError(f"Clopper-Pearson needs binary statistics, got {type(stats).__name__}")
    _check_beta(beta)
    return _cp_lower(stats.successes, stats.trials, beta)


@lru_cache(maxsize=1 << 16)
def _cp_lower(s: int, m: int, beta: float) -> float:
    if s == 0:
        return 0.0
    if s == m:
        # Beta(m, 1) has CDF x**m.
        return beta ** (1.0 / m)
    return beta_quantile(beta, s, m - s + 1)


def hoeffding_lower(stats: RealStats, beta: float) -> float:
    stats = _require_real(stats, "Hoeffding")
    _check_beta(beta)
    width = (stats.hi - stats.lo) * math.sqrt(math.log(1.0 / beta) / (2.0 * stats.m))
    return max(stats.lo, stats.mean - width)


def empirical_bernstein_lower(stats: RealStats, beta: float) -> float:
    """Maurer-Pontil empirical Bernstein bound with the unbiased variance."""
    stats = _require_real(stats, "empirical Bernstein")
    _check_beta(beta)
    m = stats.m
    if m < 2:
        raise BoundError("empirical Bernstein needs at least 2 rollouts")
    x = stats.array()
    mean = stats.mean
    var = float(np.sum((x - mean) ** 2)) / (m - 1)
    log_term = math.log(2.0 / beta)
    bound = mean - math.sqrt(2.0 * var * log_term / m) - 7.0 * (stats.hi - stats.lo) * log_term / (3.0 * (m - 1))
    return max(stats.lo, bound)


def dkw_radius(m: int, beta: float) -> float:
    """Half-width of the two-sided DKW band (Massart constant)."""
    return math.sqrt(math.log(2.0 / beta) / (2.0 * m))


def dkw_discrete_lower(stats: RealStats, beta: float) -> float:
    """Replace the ``ceil(m * q)`` largest samples by ``lo`` and average."""
    stats = _require_real(stats, "DKW")
    _check_beta(beta)
    m = stats.m
    n_shift = math.ceil(m * dkw_radius(m, beta))
    if n_shift >= m:
        return stats.lo
    x = np.sort(stats.array())
    return (math.fsum(x[: m - n_shift]) + n_shift * stats.lo) / m


def dkw_integral_lower(stats: RealStats, beta: float) -> float:
    """``lo + integral over [lo, hi] of max(0, 1 - F_m(x) - q)``.

    The empirical CDF is piecewise constant, so the integral is an exact
    sum over the gaps between consecutive order statistics.
    """
    stats = _require_real(stats, "DKW")
    _check_beta(beta)
    m = stats.m
    q = dkw_radius(m, beta)
    if q >= 1.0:
        return stats.lo
    x = np.sort(stats.array())
    edges = np.concatenate(([stats.lo], x))
    gaps = np.diff(np.concatenate((edges, [stats.hi])))[:m]
    heights = np.maximum(0.0, 1.0 - np.arange(m) / m - q)
    return stats.lo + math.fsum(heights * gaps)


_DISPATCH = {
    Method.CLOPPER_PEARSON: clopper_pearson_lower,
    Method.HOEFFDING: hoeffding_lower,
    Method.EMPIRICAL_BERNSTEIN: empirical_bernstein_lower,
    Method.DKW_DISCRETE: dkw_discrete_lower,
    Method.DKW_INTEGRAL: dkw_integral_lower,
}


def lower_bound(stats: RolloutStats, spec: BoundSpec) -> float:
    return _DISPATCH[spec.method](stats, spec.beta)


def compute_bounds(tasks: Sequence[TaskRecord], spec: BoundSpec) -> list[PerTaskBound]:
    """One bound per task, in input order."""
    want = BinaryStats if spec.method.binary else RealStats
    for task in tasks:
        if not isinstance(task.stats, want):
            raise BoundError(
                f"task {task.task_id!r}: method {spec.method.value!r} cannot use "
                f"{type(task.stats).__name__} statistics"
            )
    return [
        PerTaskBound(task.task_id, lower_bound(task.stats, spec), spec.method, task.stats.m)
        for task in tasks
    ]
