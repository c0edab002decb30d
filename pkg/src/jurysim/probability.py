"""Exact jury-election failure probabilities.

The number of adversarial jurors ``F`` in a uniformly random jury of size
``j`` drawn without replacement from ``n`` nodes, ``f`` of which are
adversarial, follows Hypergeometric(n, f, j). Everything here is a function
of that distribution:

* the single-election failure probability ``P[F >= k + 1]`` with
  ``k = (j - 1) // 3``,
* the eventual safety-violation probability when stalled juries are
  replaced by fresh elections (a three-state absorbing Markov chain), and
* the expected number of elections until the chain is absorbed.

Probabilities are computed by direct summation of the pmf. For populations
up to ``exact_below`` nodes the pmf terms are exact integers and each
reported value is a single correctly rounded division. Above the crossover
the binomials are accumulated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

EXACT_BELOW_DEFAULT = 10_000

# log C(a, b) is summed term by term below this many factors, via lgamma above
_LOG_ACCUMULATE_MAX_TERMS = 512


class ParameterError(ValueError):
    """Raised for an invalid model or query argument."""


class NeverTerminatesError(ArithmeticError):
    """Raised when re-election can never leave the undecided state."""


def standard_quorum(j: int) -> int:
    """The PBFT commit threshold ``floor(2(j-1)/3) + 1``."""
    return (2 * (j - 1)) // 3 + 1


def strong_quorum(j: int) -> int:
    """The raised threshold ``floor(4(j-1)/5) + 1``."""
    return (4 * (j - 1)) // 5 + 1


def minimal_quorum(j: int) -> int:
    """Smallest q with ``ceil(2(j-1)/3) < q``.

    This coincides with :func:`standard_quorum` unless ``j`` is a multiple
    of three, where the standard threshold lets the success and failure
    conditions of the re-election chain overlap.
    """
    return -((-2 * (j - 1)) // 3) + 1


@dataclass(frozen=True)
class HypergeomModel:
    population_n: int
    adversaries_f: int
    jury_j: int
    quorum_q: int | None = None

    def __post_init__(self) -> None:
        n, f, j = self.population_n, self.adversaries_f, self.jury_j
        for name, value in (("population_n", n), ("adversaries_f", f), ("jury_j", j)):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ParameterError(f"{name} must be an integer, got {value!r}")
        if n < 1:
            raise ParameterError(f"population_n must be positive, got {n}")
        if j < 1:
            raise ParameterError(f"jury_j must be positive, got {j}")
        if not 0 <= f <= n:
            raise ParameterError(f"adversaries_f must lie in [0, {n}], got {f}")
        if j > n:
            raise ParameterError(f"jury_j={j} exceeds population_n={n}")
        q = self.quorum_q
        if q is None:
            object.__setattr__(self, "quorum_q", minimal_quorum(j))
            return
        if isinstance(q, bool) or not isinstance(q, int):
            raise ParameterError(f"quorum_q must be an integer, got {q!r}")
        if not (3 * q > 2 * j and q <= j):
            raise ParameterError(
                f"quorum_q={q} outside (ceil(2(j-1)/3), j] = "
                f"[{minimal_quorum(j)}, {j}] for jury_j={j}"
            )

    @property
    def fault_bound(self) -> int:
        """Faults a jury of this size tolerates, ``floor((j-1)/3)``."""
        return (self.jury_j - 1) // 3

    @property
    def support(self) -> range:
        n, f, j = self.population_n, self.adversaries_f, self.jury_j
        return range(max(0, j - (n - f)), min(j, f) + 1)

    @property
    def stall_limit(self) -> int:
        """Largest adversary count that still guarantees agreement, ``j - q``."""
        return self.jury_j - self.quorum_q

    @property
    def violation_threshold(self) -> int:
        """Smallest adversary count allowing a safety violation, ``2q - j``."""
        return 2 * self.quorum_q - self.jury_j


@dataclass(frozen=True)
class TerminationOutcome:
    eventual_failure_prob: float
    eventual_success_prob: float
    mean_elections: float
    # reciprocal of P[j-q < F < 2q-j]; inf when no jury can stall
    literal_mean_elections: float
    leave_prob: float


def _log_comb(a: int, b: int) -> float:
    b = min(b, a - b)
    if b < 0:
        return -math.inf
    if b == 0:
        return 0.0
    if b <= _LOG_ACCUMULATE_MAX_TERMS:
        return math.fsum(math.log((a - b + i) / i) for i in range(1, b + 1))
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


def _check_count(model: HypergeomModel, x: int, upper: int, name: str) -> None:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ParameterError(f"{name} must be an integer, got {x!r}")
    if not 0 <= x <= upper:
        raise ParameterError(f"{name}={x} outside [0, {upper}]")


def _numerators(model: HypergeomModel) -> tuple[list[int], int]:
    """Exact pmf numerators for x = 0..j and the shared denominator C(n, j)."""
    n, f, j = model.population_n, model.adversaries_f, model.jury_j
    nums = [math.comb(f, x) * math.comb(n - f, j - x) for x in range(j + 1)]
    return nums, math.comb(n, j)


def pmf_vector(model: HypergeomModel, *, exact_below: int = EXACT_BELOW_DEFAULT) -> list[float]:
    """``[P[F = 0], ..., P[F = j]]``."""
    if model.population_n <= exact_below:
        nums, den = _numerators(model)
        return [num / den for num in nums]
    n, f, j = model.population_n, model.adversaries_f, model.jury_j
    log_den = _log_comb(n, j)
    out = []
    for x in range(j + 1):
        if x > f or j - x > n - f:
            out.append(0.0)
        else:
            out.append(math.exp(_log_comb(f, x) + _log_comb(n - f, j - x) - log_den))
    return out


def hypergeom_pmf(model: HypergeomModel, x: int, *, exact_below: int = EXACT_BELOW_DEFAULT) -> float:
    _check_count(model, x, model.jury_j, "x")
    n, f, j = model.population_n, model.adversaries_f, model.jury_j
    if model.population_n <= exact_below:
        return math.comb(f, x) * math.comb(n - f, j - x) / math.comb(n, j)
    if x > f or j - x > n - f:
        return 0.0
    return math.exp(_log_comb(f, x) + _log_comb(n - f, j - x) - _log_comb(n, j))


def _range_prob(model: HypergeomModel, lo: int, hi: int, exact_below: int) -> float:
    """P[lo <= F <= hi], clipped to the support."""
    lo, hi = max(lo, 0), min(hi, model.jury_j)
    if lo > hi:
        return 0.0
    if model.population_n <= exact_below:
        nums, den = _numerators(model)
        return sum(nums[lo : hi + 1]) / den
    return math.fsum(pmf_vector(model, exact_below=exact_below)[lo : hi + 1])


def tail_at_least(model: HypergeomModel, t: int, *, exact_below: int = EXACT_BELOW_DEFAULT) -> float:
    """``P[F >= t]`` by direct summation."""
    _check_count(model, t, model.jury_j + 1, "t")
    return _range_prob(model, t, model.jury_j, exact_below)


def tail_at_most(model: HypergeomModel, t: int, *, exact_below: int = EXACT_BELOW_DEFAULT) -> float:
    """``P[F <= t]``; negative ``t`` gives 0."""
    return _range_prob(model, 0, t, exact_below)


def single_jury_failure(model: HypergeomModel, *, exact_below: int = EXACT_BELOW_DEFAULT) -> float:
    """Probability that one election seats more than ``floor((j-1)/3)`` adversaries."""
    return tail_at_least(model, model.fault_bound + 1, exact_below=exact_below)


def eventual_failure(model: HypergeomModel, *, exact_below: int = EXACT_BELOW_DEFAULT) -> TerminationOutcome:
    """Absorption probabilities of the re-election chain.

    Each election independently either succeeds (``F <= j - q``), commits
    a safety violation (``F >= 2q - j``) or stalls, in which case a new
    jury is drawn. The violation threshold is taken relative to the jury
    size ``j``.
    """
    fail_lo = model.violation_threshold
    succ_hi = model.stall_limit
    j = model.jury_j
    if model.population_n <= exact_below:
        nums, den = _numerators(model)
        fail_num = sum(nums[max(fail_lo, 0) :])
        succ_num = sum(nums[: succ_hi + 1])
        leave_num = fail_num + succ_num
        if leave_num == 0:
            raise NeverTerminatesError(f"no jury of {model} can terminate")
        stay_num = den - leave_num
        fail_p = fail_num / leave_num
        return TerminationOutcome(
            eventual_failure_prob=fail_p,
            eventual_success_prob=succ_num / leave_num,
            mean_elections=den / leave_num,
            literal_mean_elections=den / stay_num if stay_num else math.inf,
            leave_prob=leave_num / den,
        )
    pmf = pmf_vector(model, exact_below=exact_below)
    p_fail = math.fsum(pmf[max(fail_lo, 0) :])
    p_succ = math.fsum(pmf[: succ_hi + 1])
    leave = p_fail + p_succ
    if leave == 0.0:
        raise NeverTerminatesError(f"no jury of {model} can terminate")
    stay = math.fsum(pmf[succ_hi + 1 : max(fail_lo, 0)]) if fail_lo > succ_hi + 1 else 0.0
    return TerminationOutcome(
        eventual_failure_prob=p_fail / leave,
        eventual_success_prob=p_succ / leave,
        mean_elections=1.0 / leave,
        literal_mean_elections=1.0 / stay if stay > 0.0 else math.inf,
        leave_prob=leave,
    )


@dataclass(frozen=True)
class CurveRow:
    f: int
    f_over_n: float
    j: int
    q: int
    p_fail_single: float
    p_eventual_failure: float
    mean_elections: float


CURVE_COLUMNS: Sequence[str] = (
    "f",
    "f_over_n",
    "j",
    "q",
    "p_fail_single",
    "p_eventual_failure",
    "mean_elections",
)


def failure_curve(
    n: int,
    j: int,
    q: int,
    f_range: Iterable[int],
    *,
    exact_below: int = EXACT_BELOW_DEFAULT,
) -> list[CurveRow]:
    """Eventual failure probability over a range of adversary counts.

    Points where no jury can ever terminate are reported with NaN failure
    probability and infinite mean elections rather than raising.
    """
    rows = []
    for f in f_range:
        if not 0 <= f <= n:
            raise ParameterError(f"f={f} outside [0, {n}]")
        model = HypergeomModel(n, f, j, q)
        single = single_jury_failure(model, exact_below=exact_below)
        try:
            out = eventual_failure(model, exact_below=exact_below)
            p_eventual, mean = out.eventual_failure_prob, out.mean_elections
        except NeverTerminatesError:
            p_eventual, mean = math.nan, math.inf
        rows.append(CurveRow(f, f / n, j, q, single, p_eventual, mean))
    return rows
