"""Distribution-level safety certificates from per-task lower bounds.

Given ``n`` i.i.d. sampled tasks, each with a lower confidence bound that
holds with probability ``1 - beta``, and a performance threshold ``B``, the
certificate is a violation level ``epsilon`` such that, with probability at
least ``1 - delta`` over tasks and rollouts, a fresh task reaches ``B`` with
probability at least ``1 - epsilon``.

For a threshold with ``k`` bounds strictly below it and any
``1 <= K <= n - k``, ``epsilon`` solves

    Pr[Bin(n - k, 1 - beta) >= K] - (1 - delta / (n + 1)) = Pr[Bin(n, epsilon) <= n - K]

The left side is a constant, the right side decreases strictly in
``epsilon``, so the root is found by bisection. Every admissible ``K`` is
valid simultaneously (the ``delta / (n + 1)`` split pays for that), so the
smallest root over ``K`` is reported.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

from mtcert.bounds import BinaryStats, PerTaskBound, clopper_pearson_lower
from mtcert.numerics import binomial_cdf_leq, binomial_tail_geq

EPS_XTOL = 1e-12
EPS_MAX_ITER = 200


class Infeasible(ValueError):
    """No root in [0, 1]: too few per-task bounds can be trusted at once."""


def _values(bounds: Iterable) -> list[float]:
    return [b.lower_bound if isinstance(b, PerTaskBound) else float(b) for b in bounds]


def count_below(bounds: Iterable, B: float) -> int:
    """Number of lower bounds strictly below ``B``; a bound equal to ``B`` supports it."""
    return sum(1 for v in _values(bounds) if v < B)


def _check_counts(n: int, k: int, K: int) -> None:
    if n < 1 or not 0 <= k <= n or not 0 <= K <= n - k:
        raise ValueError(f"need n >= 1, 0 <= k <= n, 0 <= K <= n - k; got n={n}, k={k}, K={K}")


def _budget(n: int, k: int, K: int, beta: float, delta: float) -> float:
    """Left-hand constant, written as ``delta/(n+1) - Pr[fewer than K bounds valid]``.

    The failure probability is summed directly so that nothing is lost to
    cancellation against 1.
    """
    if K == 0:
        return delta / (n + 1)
    retained = n - k
    return delta / (n + 1) - binomial_tail_geq(retained, beta, retained - K + 1)


def feasibility(n: int, k: int, K: int, beta: float, delta: float) -> bool:
    """Whether ``Pr[Bin(n-k, 1-beta) >= K] >= 1 - delta/(n+1)``."""
    _check_counts(n, k, K)
    return _budget(n, k, K, beta, delta) >= 0.0


def feasibility_full_delta(n: int, k: int, K: int, beta: float, delta: float) -> bool:
    """The stricter condition ``Pr[Bin(n-k, 1-beta) >= K] >= 1 - delta``.

    Reported next to certificates for comparison only; certification uses
    :func:`feasibility`.
    """
    _check_counts(n, k, K)
    if K == 0:
        return True
    retained = n - k
    return binomial_tail_geq(retained, beta, retained - K + 1) <= delta


def _solve_cdf_root(n: int, M: int, target: float) -> tuple[float, float]:
    """Bisection for ``Pr[Bin(n, eps) <= M] = target``.

    Returns the upper end of the final bracket, so the reported ``eps`` is
    never below the exact root, together with the residual there.
    """
    if target >= 1.0:
        return 0.0, binomial_cdf_leq(n, 0.0, M) - target
    if target <= 0.0:
        return 1.0, binomial_cdf_leq(n, 1.0, M) - target
    lo, hi = 0.0, 1.0
    for _ in range(EPS_MAX_ITER):
        if hi - lo <= EPS_XTOL:
            break
        mid = 0.5 * (lo + hi)
        if binomial_cdf_leq(n, mid, M) > target:
            lo = mid
        else:
            hi = mid
    return hi, binomial_cdf_leq(n, hi, M) - target


def solve_epsilon(n: int, k: int, K: int, beta: float, delta: float) -> float:
    """Root ``epsilon`` for one fixed ``K``.

    ``K = 0`` makes the right-hand side identically 1 and yields the vacuous
    ``epsilon = 1``. Raises :class:`Infeasible` when the left-hand side is
    negative.
    """
    _check_counts(n, k, K)
    budget = _budget(n, k, K, beta, delta)
    if budget < 0.0:
        raise Infeasible(f"K={K} infeasible for n={n}, k={k}, beta={beta}, delta={delta}")
    if K == 0:
        return 1.0
    return _solve_cdf_root(n, n - K, budget)[0]


@dataclass(frozen=True)
class Certificate:
    threshold: float
    epsilon: float
    delta: float
    beta: float
    k_of_B: int
    K_star: int
    n: int
    feasible: bool
    solver_residual: float = 0.0

    @property
    def certified_safety(self) -> float:
        return 1.0 - self.epsilon


@dataclass(frozen=True)
class CertificateRequest:
    bounds: Sequence
    threshold: float
    delta: float
    beta: Optional[float] = None

    def __post_init__(self):
        if len(self.bounds) < 1:
            raise ValueError("at least one per-task bound is required")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.beta is None:
            object.__setattr__(self, "beta", default_beta(self.delta, len(self.bounds)))
        # beta = 0 stands for exactly known per-task values.
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta!r}")


def default_beta(delta: float, n: int) -> float:
    """Per-task confidence ``delta / n``, the usual default."""
    return delta / n


@lru_cache(maxsize=1 << 14)
def min_epsilon(n: int, k: int, beta: float, delta: float) -> tuple[float, int, float, bool]:
    """Optimise over ``K`` for a given discard count ``k``.

    Returns ``(epsilon, K_star, residual, feasible)``. The certificate depends
    on the data only through ``k``, which makes this cache effective across
    thresholds and repeated experiments.

    ``K`` is scanned downwards from ``n - k``. Once a candidate ``eps`` is
    known, a smaller ``K`` can only beat it if
    ``Pr[Bin(n, eps) <= n - K]`` drops below that ``K``'s budget; as the
    budget never exceeds ``delta/(n+1)`` and the probability grows as ``K``
    shrinks, the scan stops at the first ``K`` where the probability reaches
    ``delta/(n+1)``. The result is the same as a full scan.
    """
    if k >= n:
        return 1.0, 0, 0.0, False
    cap = delta / (n + 1)
    best_eps, best_K, best_res, found = 1.0, 0, 0.0, False
    for K in range(n - k, 0, -1):
        budget = _budget(n, k, K, beta, delta)
        if budget < 0.0:
            continue
        M = n - K
        if found:
            rhs = binomial_cdf_leq(n, best_eps, M)
            if rhs >= cap:
                break
            if rhs >= budget:
                continue
        eps, res = _solve_cdf_root(n, M, budget)
        if not found or eps < best_eps:
            best_eps, best_K, best_res = eps, K, res
        found = True
    return best_eps, best_K, best_res, found


def best_certificate(request: CertificateRequest) -> Certificate:
    n = len(request.bounds)
    k = count_below(request.bounds, request.threshold)
    eps, K, res, feasible = min_epsilon(n, k, request.beta, request.delta)
    return Certificate(
        threshold=request.threshold,
        epsilon=eps,
        delta=request.delta,
        beta=request.beta,
        k_of_B=k,
        K_star=K,
        n=n,
        feasible=feasible,
        solver_residual=res,
    )


@dataclass
class CertificateCurve:
    """Certified safety as a step function of the threshold.

    ``breakpoints`` holds ``(B, certificate)`` pairs in ascending ``B``. On
    ``(previous B, B]`` the certificate is constant, so evaluating at the
    breakpoints covers the worst case of every step.
    """

    breakpoints: list = field(default_factory=list)

    @property
    def thresholds(self) -> list[float]:
        return [b for b, _ in self.breakpoints]

    @property
    def certified_safety(self) -> list[float]:
        return [c.certified_safety for _, c in self.breakpoints]

    def is_monotone(self) -> bool:
        s = self.certified_safety
        return all(a >= b for a, b in zip(s, s[1:]))


def certificate_curve(
    bounds: Sequence,
    delta: float,
    beta: Optional[float] = None,
    extra_thresholds: Optional[Iterable[float]] = None,
) -> CertificateCurve:
    vals = sorted(_values(bounds))
    n = len(vals)
    if n < 1:
        raise ValueError("at least one per-task bound is required")
    if beta is None:
        beta = default_beta(delta, n)
    grid = set(vals)
    if extra_thresholds is not None:
        grid.update(float(b) for b in extra_thresholds)
    out = []
    for B in sorted(grid):
        k = bisect.bisect_left(vals, B)
        eps, K, res, feasible = min_epsilon(n, k, beta, delta)
        out.append((B, Certificate(B, eps, delta, beta, k, K, n, feasible, res)))
    return CertificateCurve(out)


@dataclass(frozen=True)
class EpisodicRequest:
    """One binary outcome per sampled task: 1 iff the episode reached ``t``."""

    outcomes: Sequence[int]
    t: float
    delta: float
    rollouts_per_task: int = 1

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if len(self.outcomes) < 1:
            raise ValueError("at least one outcome is required")
        if any(o not in (0, 1) for o in self.outcomes):
            raise ValueError("outcomes must be 0/1 indicators")


@dataclass(frozen=True)
class EpisodicCertificate:
    threshold: float
    lower_bound: float
    delta: float
    successes: int
    n: int

    @property
    def certified_safety(self) -> float:
        return self.lower_bound

    @property
    def epsilon(self) -> float:
        return 1.0 - self.lower_bound


def episodic_certificate(request: EpisodicRequest) -> EpisodicCertificate:
    """Lower bound on ``Pr[G(tau) >= t]`` for one episode in a fresh task.

    Rollouts from the same task are only conditionally independent, so each
    task must contribute exactly one outcome.
    """
    if request.rollouts_per_task != 1:
        raise ValueError(
            "episodic certificates need exactly one rollout per task; "
            f"got {request.rollouts_per_task}"
        )
    n = len(request.outcomes)
    s = int(sum(request.outcomes))
    lb = clopper_pearson_lower(BinaryStats(s, n), request.delta)
    return EpisodicCertificate(request.t, lb, request.delta, s, n)
