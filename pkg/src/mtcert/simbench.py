"""Synthetic multi-task benchmarks with analytic ground truth.

Two task families are provided:

* a slip corridor where a task is a slip probability ``p`` drawn from a
  truncated Gaussian mixture and the forward policy succeeds with
  probability ``(1 - p)**L``;
* a two-bridge world where a task draws independent slip probabilities for
  a short left bridge and a longer right bridge, and each fixed policy
  survives one slip check per bridge step.

Rollouts are simulated as Bernoulli draws of the per-episode success, which
has the same law as stepping through the corridor. Randomness comes from
counter-based Philox streams keyed by ``(seed, repetition, task, purpose)``
so results do not depend on evaluation order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import ndtr, ndtri

from mtcert.bounds import BinaryStats, TaskRecord, clopper_pearson_lower
from mtcert.certify import CertificateCurve, certificate_curve, default_beta
from mtcert.numerics import binomial_tail_geq

# Stream purpose tags.
_TASKS = 0
_ROLLOUTS = 1


def stream(*key: int) -> np.random.Generator:
    """Independent generator for an integer key path."""
    if not key:
        raise ValueError("stream key must be nonempty")
    root, *rest = (int(k) for k in key)
    seq = np.random.SeedSequence(entropy=root, spawn_key=tuple(rest))
    return np.random.Generator(np.random.Philox(seq))


def _key(seed) -> tuple:
    return tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)


class Policy(str, enum.Enum):
    SLIP_FORWARD = "forward"
    BRIDGE_LEFT = "left"
    BRIDGE_RIGHT = "right"


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: float
    stddev: float


@dataclass(frozen=True)
class SlipGridTaskDist:
    """Truncated Gaussian mixture over the slip probability on ``[0, 1)``.

    Each component is truncated to the unit interval and renormalized on its
    own; a zero ``stddev`` gives a point mass.
    """

    components: tuple = (
        MixtureComponent(0.5, 0.10, 0.03),
        MixtureComponent(0.5, 0.25, 0.05),
    )
    path_length: int = 5

    def __post_init__(self):
        comps = tuple(c if isinstance(c, MixtureComponent) else MixtureComponent(*c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("mixture needs at least one component")
        if any(c.weight <= 0 for c in comps):
            raise ValueError("mixture weights must be positive")
        if not math.isclose(sum(c.weight for c in comps), 1.0, abs_tol=1e-9):
            raise ValueError("mixture weights must sum to 1")
        for c in comps:
            if c.stddev < 0:
                raise ValueError("stddev must be nonnegative")
            if c.stddev == 0 and not 0.0 <= c.mean < 1.0:
                raise ValueError("point mass must lie in [0, 1)")
        if self.path_length < 1:
            raise ValueError("path_length must be >= 1")

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def cdf(self, p: float) -> float:
        """Mixture CDF of the slip probability."""
        total = 0.0
        for c in self.components:
            total += c.weight * _truncnorm_cdf(p, c.mean, c.stddev)
        return min(1.0, max(0.0, total))

    def pdf(self, p: float) -> float:
        total = 0.0
        for c in self.components:
            if c.stddev == 0 or not 0.0 <= p <= 1.0:
                continue
            mass = ndtr((1.0 - c.mean) / c.stddev) - ndtr(-c.mean / c.stddev)
            z = (p - c.mean) / c.stddev
            total += c.weight * math.exp(-0.5 * z * z) / (c.stddev * math.sqrt(2 * math.pi) * mass)
        return total


def _truncnorm_cdf(p: float, mu: float, sd: float) -> float:
    if sd == 0:
        return 1.0 if p >= mu else 0.0
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    lo = ndtr(-mu / sd)
    hi = ndtr((1.0 - mu) / sd)
    return float((ndtr((p - mu) / sd) - lo) / (hi - lo))


@dataclass(frozen=True)
class BridgeWorldDist:
    p_left_range: tuple = (0.2, 0.3)
    p_right_range: tuple = (0.0, 0.2)
    left_steps: int = 5
    right_steps: int = 7

    def __post_init__(self):
        for lo, hi in (self.p_left_range, self.p_right_range):
            if not 0.0 <= lo <= hi < 1.0:
                raise ValueError(f"slip range must lie within [0, 1), got [{lo}, {hi}]")
        if self.left_steps < 1 or self.right_steps < 1:
            raise ValueError("step counts must be >= 1")
        if self.right_steps <= self.left_steps:
            raise ValueError("the right bridge must be the longer route")


@dataclass(frozen=True)
class SlipTask:
    p: float
    path_length: int = 5


@dataclass(frozen=True)
class BridgeTask:
    p_left: float
    p_right: float
    left_steps: int = 5
    right_steps: int = 7


TaskDist = Union[SlipGridTaskDist, BridgeWorldDist]
Task = Union[SlipTask, BridgeTask]


def sample_tasks(dist: TaskDist, n: int, seed) -> list:
    """Draw ``n`` i.i.d. tasks; identical seeds give identical lists."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = stream(*_key(seed), _TASKS)
    if isinstance(dist, SlipGridTaskDist):
        comp = rng.choice(len(dist.components), size=n, p=dist.weights / dist.weights.sum())
        u = rng.uniform(size=n)
        ps = np.empty(n)
        for j, c in enumerate(dist.components):
            idx = comp == j
            if c.stddev == 0:
                ps[idx] = c.mean
                continue
            lo = ndtr(-c.mean / c.stddev)
            hi = ndtr((1.0 - c.mean) / c.stddev)
            x = c.mean + c.stddev * ndtri(lo + u[idx] * (hi - lo))
            ps[idx] = np.clip(x, 0.0, np.nextafter(1.0, 0.0))
        return [SlipTask(float(p), dist.path_length) for p in ps]
    if isinstance(dist, BridgeWorldDist):
        pl = rng.uniform(*dist.p_left_range, size=n)
        pr = rng.uniform(*dist.p_right_range, size=n)
        return [BridgeTask(float(a), float(b), dist.left_steps, dist.right_steps) for a, b in zip(pl, pr)]
    raise TypeError(f"unknown task distribution {type(dist).__name__}")


def true_performance(task: Task, policy: Policy) -> float:
    policy = Policy(policy)
    if isinstance(task, SlipTask):
        if policy is not Policy.SLIP_FORWARD:
            raise ValueError(f"policy {policy.value!r} does not apply to slip-corridor tasks")
        return (1.0 - task.p) ** task.path_length
    if isinstance(task, BridgeTask):
        if policy is Policy.BRIDGE_LEFT:
            return (1.0 - task.p_left) ** task.left_steps
        if policy is Policy.BRIDGE_RIGHT:
            return (1.0 - task.p_right) ** task.right_steps
        raise ValueError(f"policy {policy.value!r} does not apply to bridge tasks")
    raise TypeError(f"unknown task type {type(task).__name__}")


def _uniform_cdf(x: float, lo: float, hi: float) -> float:
    if hi == lo:
        return 1.0 if x >= lo else 0.0
    return min(1.0, max(0.0, (x - lo) / (hi - lo)))


def true_safety(dist: TaskDist, policy: Policy, B: float) -> float:
    """``Pr[J >= B]`` for a fresh task, in closed form.

    With ``J = (1 - p)**L`` this is the slip CDF at ``1 - B**(1/L)``.
    """
    policy = Policy(policy)
    if B <= 0.0:
        return 1.0
    if B > 1.0:
        return 0.0
    if isinstance(dist, SlipGridTaskDist):
        if policy is not Policy.SLIP_FORWARD:
            raise ValueError(f"policy {policy.value!r} does not apply to slip-corridor tasks")
        return dist.cdf(1.0 - B ** (1.0 / dist.path_length))
    if isinstance(dist, BridgeWorldDist):
        if policy is Policy.BRIDGE_LEFT:
            return _uniform_cdf(1.0 - B ** (1.0 / dist.left_steps), *dist.p_left_range)
        if policy is Policy.BRIDGE_RIGHT:
            return _uniform_cdf(1.0 - B ** (1.0 / dist.right_steps), *dist.p_right_range)
        raise ValueError(f"policy {policy.value!r} does not apply to bridge tasks")
    raise TypeError(f"unknown task distribution {type(dist).__name__}")


def rollout_outcomes(task: Task, policy: Policy, m: int, seed) -> BinaryStats:
    """Number of successes in ``m`` simulated episodes."""
    if m < 1:
        raise ValueError("m must be >= 1")
    J = true_performance(task, policy)
    s = int(stream(*_key(seed), _ROLLOUTS).binomial(m, J))
    return BinaryStats(s, m)


def simulate_dataset(dist: TaskDist, policy: Policy, n: int, m: int, seed) -> tuple[list, list[TaskRecord]]:
    """Tasks and their rollout records; task ``i`` uses stream ``(*seed, i)``."""
    key = _key(seed)
    tasks = sample_tasks(dist, n, key)
    records = [
        TaskRecord(f"task-{i:05d}", rollout_outcomes(task, policy, m, key + (i,)))
        for i, task in enumerate(tasks)
    ]
    return tasks, records


@dataclass
class CoverageReport:
    repetitions: int
    violations: int
    thresholds: Optional[list]
    empirical_violation_rate: float
    delta: float
    n: int = 0
    m: int = 0
    beta: float = 0.0
    violating_repetitions: list = field(default_factory=list)

    def binomial_p_value(self) -> float:
        """One-sided ``Pr[Bin(R, delta) >= violations]``."""
        return binomial_tail_geq(self.repetitions, self.delta, self.violations)


def _certified_curve(records: Sequence[TaskRecord], beta: float, delta: float, thresholds) -> CertificateCurve:
    bounds = [clopper_pearson_lower(r.stats, beta) for r in records]
    if thresholds is None:
        return certificate_curve(bounds, delta, beta)
    # Only the requested thresholds, not the data breakpoints.
    curve = certificate_curve(bounds, delta, beta, thresholds)
    wanted = set(float(b) for b in thresholds)
    return CertificateCurve([(B, c) for B, c in curve.breakpoints if B in wanted])


def coverage_experiment(
    dist: TaskDist,
    policy: Policy,
    n: int,
    m: int,
    beta: Optional[float],
    delta: float,
    thresholds: Optional[Sequence[float]],
    R: int,
    seed: int,
) -> CoverageReport:
    """Repeat certification ``R`` times against the known ground truth.

    ``thresholds=None`` checks every data breakpoint of each repetition,
    which is the worst case over all thresholds. A repetition counts as a
    violation if any certified ``1 - epsilon`` exceeds the true safety.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if beta is None:
        beta = default_beta(delta, n)
    policy = Policy(policy)
    bad = []
    for r in range(R):
        _, records = simulate_dataset(dist, policy, n, m, (seed, r))
        curve = _certified_curve(records, beta, delta, thresholds)
        for B, cert in curve.breakpoints:
            if cert.certified_safety > true_safety(dist, policy, B):
                bad.append(r)
                break
    return CoverageReport(
        repetitions=R,
        violations=len(bad),
        thresholds=None if thresholds is None else list(thresholds),
        empirical_violation_rate=len(bad) / R,
        delta=delta,
        n=n,
        m=m,
        beta=beta,
        violating_repetitions=bad,
    )


@dataclass
class TightnessCurve:
    thresholds: list
    certified: list
    true: list

    def rows(self):
        return list(zip(self.thresholds, self.certified, self.true))

    @property
    def gaps(self) -> list:
        return [t - c for c, t in zip(self.certified, self.true)]


def tightness_curve(
    dist: TaskDist,
    policy: Policy,
    n: int,
    m: int,
    beta: Optional[float],
    delta: float,
    seed,
    extra_thresholds: Optional[Sequence[float]] = None,
) -> TightnessCurve:
    """Certified and true safety side by side on the breakpoint grid."""
    if beta is None:
        beta = default_beta(delta, n)
    policy = Policy(policy)
    _, records = simulate_dataset(dist, policy, n, m, seed)
    bounds = [clopper_pearson_lower(r.stats, beta) for r in records]
    curve = certificate_curve(bounds, delta, beta, extra_thresholds)
    Bs = curve.thresholds
    return TightnessCurve(Bs, curve.certified_safety, [true_safety(dist, policy, B) for B in Bs])
