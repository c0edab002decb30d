import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jurysim.probability import (
    HypergeomModel,
    NeverTerminatesError,
    ParameterError,
    eventual_failure,
    failure_curve,
    hypergeom_pmf,
    minimal_quorum,
    pmf_vector,
    single_jury_failure,
    standard_quorum,
    strong_quorum,
    tail_at_least,
)


def enumerate_adversary_counts(n, f, j):
    """Histogram of adversaries per jury over every j-subset of n nodes."""
    counts = [0] * (j + 1)
    for jury in itertools.combinations(range(n), j):
        counts[sum(1 for node in jury if node < f)] += 1
    return counts


def test_quorum_presets():
    assert standard_quorum(22) == 15
    assert strong_quorum(40) == 32
    assert standard_quorum(4) == 3
    # j = 6: floor(10/3) + 1 = 4 lets 2 faults both stall-free and violating
    assert standard_quorum(6) == 4
    assert minimal_quorum(6) == 5
    for j in range(1, 200):
        q = minimal_quorum(j)
        assert 3 * q > 2 * j and 3 * (q - 1) <= 2 * j


@pytest.mark.parametrize(
    "n,f,j,x,expected",
    [
        (10, 0, 4, 0, 1.0),
        (10, 10, 4, 4, 1.0),
        (5, 2, 2, 1, 0.6),
    ],
)
def test_pmf_examples(n, f, j, x, expected):
    assert hypergeom_pmf(HypergeomModel(n, f, j), x) == pytest.approx(expected, abs=1e-15)


def test_pmf_matches_enumeration():
    counts = enumerate_adversary_counts(5, 2, 2)
    assert counts == [3, 6, 1]
    m = HypergeomModel(5, 2, 2)
    assert [hypergeom_pmf(m, x) for x in range(3)] == pytest.approx([0.3, 0.6, 0.1], abs=1e-15)


@pytest.mark.parametrize(
    "n,f,j,t,expected",
    [
        (10, 0, 4, 2, 0.0),
        (5, 2, 2, 1, 0.7),
    ],
)
def test_tail_examples(n, f, j, t, expected):
    assert tail_at_least(HypergeomModel(n, f, j), t) == pytest.approx(expected, abs=1e-15)


def test_tail_monte_carlo_large_population():
    m = HypergeomModel(10_000, 1_000, 22)
    exact = tail_at_least(m, 8)
    draws = 10_000_000
    rng = np.random.default_rng(20240607)
    hits = int((rng.hypergeometric(1_000, 9_000, 22, size=draws) >= 8).sum())
    p_hat = hits / draws
    se = math.sqrt(exact * (1 - exact) / draws)
    assert abs(p_hat - exact) <= 3 * se


def test_exact_and_log_routes_agree():
    for n, f, j in [(10_000, 1_000, 22), (10_000, 3_000, 100), (9_000, 4_500, 70)]:
        exact = pmf_vector(HypergeomModel(n, f, j))
        logged = pmf_vector(HypergeomModel(n, f, j), exact_below=0)
        for a, b in zip(exact, logged):
            assert b == pytest.approx(a, rel=1e-11, abs=1e-300)


def test_parameter_errors():
    with pytest.raises(ParameterError):
        HypergeomModel(10, 11, 4)
    with pytest.raises(ParameterError):
        HypergeomModel(10, 2, 11)
    with pytest.raises(ParameterError):
        HypergeomModel(10, 2, 4, quorum_q=2)
    with pytest.raises(ParameterError):
        HypergeomModel(10, 2, 4, quorum_q=5)
    with pytest.raises(ParameterError):
        hypergeom_pmf(HypergeomModel(10, 2, 4), 5)
    with pytest.raises(ParameterError):
        tail_at_least(HypergeomModel(10, 2, 4), 6)


def test_eventual_failure_examples():
    out = eventual_failure(HypergeomModel(10_000, 0, 22, 15))
    assert out.eventual_failure_prob == 0.0
    assert out.mean_elections == 1.0

    # C(5,4) = 5 juries: 3 with two adversaries (>= 2q-j = 2), 2 with one (<= j-q = 1)
    counts = enumerate_adversary_counts(5, 2, 4)
    assert counts == [0, 2, 3, 0, 0]
    out = eventual_failure(HypergeomModel(5, 2, 4, 3))
    assert out.eventual_failure_prob == pytest.approx(0.6, abs=1e-15)
    assert out.mean_elections == 1.0
    assert out.literal_mean_elections == math.inf


def test_eventual_failure_never_terminates():
    # every jury holds exactly two adversaries; stall band is 1..3 for q = j = 4
    with pytest.raises(NeverTerminatesError):
        eventual_failure(HypergeomModel(4, 2, 4, 4))


def test_eventual_failure_absorption_simulation():
    n, f, j = 10_000, 3_000, 40
    q = strong_quorum(j)
    assert q == 32
    out = eventual_failure(HypergeomModel(n, f, j, q))
    rng = np.random.default_rng(99)
    trials = 1_000_000
    fail_lo, succ_hi = 2 * q - j, j - q
    failures = 0
    elections = 0
    pending = trials
    while pending:
        draws = rng.hypergeometric(f, n - f, j, size=pending)
        elections += pending
        failures += int((draws >= fail_lo).sum())
        pending = int(((draws > succ_hi) & (draws < fail_lo)).sum())
    p_hat = failures / trials
    p = out.eventual_failure_prob
    se = math.sqrt(p * (1 - p) / trials)
    assert abs(p_hat - p) <= 3 * se
    # elections per trial is geometric with success prob = leave_prob
    mean_hat = elections / trials
    leave = out.leave_prob
    se_mean = math.sqrt((1 - leave) / leave**2 / trials)
    assert abs(mean_hat - out.mean_elections) <= 3 * se_mean


def test_literal_mean_elections_diagnostic():
    m = HypergeomModel(10_000, 3_000, 40, 32)
    out = eventual_failure(m)
    stay = 1.0 - out.leave_prob
    assert out.literal_mean_elections == pytest.approx(1.0 / stay, rel=1e-12)
    assert out.mean_elections == pytest.approx(1.0 / out.leave_prob, rel=1e-12)


def test_failure_curve_endpoints_and_monotone():
    n, j = 200, 10
    q = standard_quorum(j)
    rows = failure_curve(n, j, q, range(0, n + 1))
    assert rows[0].p_eventual_failure == 0.0
    assert rows[-1].p_eventual_failure == 1.0
    values = [r.p_eventual_failure for r in rows]
    assert all(b >= a - 1e-15 for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("j", [10, 22, 40, 70, 100])
@pytest.mark.parametrize("preset", [standard_quorum, strong_quorum])
def test_failure_curve_against_monte_carlo(j, preset):
    n = 10_000
    q = preset(j)
    rng = np.random.default_rng(j * 7 + q)
    draws = 200_000
    for row in failure_curve(n, j, q, [1_000, 2_000, 3_000]):
        sample = rng.hypergeometric(row.f, n - row.f, j, size=draws)
        fail = (sample >= 2 * q - j).sum()
        leave = fail + (sample <= j - q).sum()
        if leave == 0:
            continue
        p_hat = fail / leave
        p = row.p_eventual_failure
        se = math.sqrt(max(p * (1 - p), 1e-300) / leave)
        assert abs(p_hat - p) <= 3 * se + 1e-12


models = st.integers(min_value=1, max_value=400).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.integers(min_value=0, max_value=n),
        st.integers(min_value=1, max_value=min(n, 60)),
    )
)


@settings(max_examples=150, deadline=None)
@given(models)
def test_pmf_sums_to_one(nfj):
    n, f, j = nfj
    for exact_below in (10_000, 0):
        total = math.fsum(pmf_vector(HypergeomModel(n, f, j), exact_below=exact_below))
        assert abs(total - 1.0) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=10_001, max_value=1_000_000), st.data())
def test_pmf_sums_to_one_large_population(n, data):
    f = data.draw(st.integers(min_value=0, max_value=n))
    j = data.draw(st.integers(min_value=1, max_value=100))
    total = math.fsum(pmf_vector(HypergeomModel(n, f, j)))
    assert abs(total - 1.0) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(models)
def test_tail_monotone_in_t_and_f(nfj):
    n, f, j = nfj
    m = HypergeomModel(n, f, j)
    tails = [tail_at_least(m, t) for t in range(j + 2)]
    assert all(b <= a + 1e-15 for a, b in zip(tails, tails[1:]))
    if f < n:
        bigger = HypergeomModel(n, f + 1, j)
        for t in range(j + 2):
            assert tail_at_least(bigger, t) >= tails[t] - 1e-15


@settings(max_examples=100, deadline=None)
@given(models, st.data())
def test_failure_plus_success_is_one(nfj, data):
    n, f, j = nfj
    q = data.draw(st.integers(min_value=minimal_quorum(j), max_value=j))
    try:
        out = eventual_failure(HypergeomModel(n, f, j, q))
    except NeverTerminatesError:
        return
    assert abs(out.eventual_failure_prob + out.eventual_success_prob - 1.0) <= 1e-12
    assert out.mean_elections >= 1.0


@pytest.mark.parametrize("n,f,j", [(12, 5, 7), (30, 20, 10), (200, 150, 13)])
def test_unanimity_violation_requires_full_capture(n, f, j):
    m = HypergeomModel(n, f, j, j)
    out = eventual_failure(m)
    p_all = hypergeom_pmf(m, j)
    p_none = hypergeom_pmf(m, 0)
    assert out.eventual_failure_prob == pytest.approx(p_all / (p_all + p_none), rel=1e-12)


def test_single_jury_failure_uses_fault_bound():
    m = HypergeomModel(10_000, 1_000, 22)
    assert m.fault_bound == 7
    assert single_jury_failure(m) == tail_at_least(m, 8)
