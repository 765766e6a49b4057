import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evacnet.stats import doubled_midranks, mann_whitney_u, wilcoxon_signed_rank


def brute_u(xs, ys):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in xs for y in ys)


def brute_mwu_p(xs, ys):
    """Enumerate every split of the pooled sample."""
    pooled = list(xs) + list(ys)
    n, m = len(xs), len(ys)
    obs = abs(brute_u(xs, ys) - n * m / 2)
    hit = total = 0
    for idx in itertools.combinations(range(n + m), n):
        a = [pooled[i] for i in idx]
        b = [pooled[i] for i in range(n + m) if i not in idx]
        total += 1
        hit += abs(brute_u(a, b) - n * m / 2) >= obs - 1e-9
    return hit / total


def naive_midranks(vals):
    return [sum(v > w for w in vals) + (sum(v == w for w in vals) + 1) / 2 for v in vals]


def brute_wilcoxon_p(d):
    d = [v for v in d if v != 0]
    if not d:
        return 1.0
    r = naive_midranks([abs(v) for v in d])
    total = sum(r)
    obs = abs(sum(ri for ri, v in zip(r, d) if v > 0) - total / 2)
    hit = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        hit += abs(sum(ri for ri, s in zip(r, signs) if s) - total / 2) >= obs - 1e-9
    return hit / 2 ** len(d)


small = st.lists(st.integers(0, 6).map(float), min_size=1, max_size=5)


def test_midranks_match_naive():
    vals = [3.0, 1.0, 3.0, 2.0, 3.0, 0.5]
    r2, ties = doubled_midranks(vals)
    assert list(r2 / 2) == naive_midranks(vals)
    assert sorted(ties.tolist()) == [1, 1, 1, 3]


def test_mwu_textbook_cases():
    assert tuple(mann_whitney_u([1, 2], [3, 4])) == (0.0, pytest.approx(1 / 3))
    u, p = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert u == 0 and p == pytest.approx(0.1)


def test_mwu_all_tied():
    r = mann_whitney_u([2, 2, 2], [2, 2])
    assert r.statistic == 3.0 and r.p_value == 1.0


def test_mwu_rejects_bad_input():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1])
    with pytest.raises(ValueError):
        mann_whitney_u([np.nan], [1])


@settings(max_examples=80, deadline=None)
@given(small, small)
def test_mwu_matches_enumeration(xs, ys):
    r = mann_whitney_u(xs, ys)
    assert r.statistic == brute_u(xs, ys)
    assert r.p_value == pytest.approx(brute_mwu_p(xs, ys), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(small, small)
def test_mwu_symmetry(xs, ys):
    a, b = mann_whitney_u(xs, ys), mann_whitney_u(ys, xs)
    assert a.statistic + b.statistic == len(xs) * len(ys)
    assert a.p_value == pytest.approx(b.p_value, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(small, small)
def test_mwu_monotone_invariance(xs, ys):
    f = lambda v: [math.exp(t) * 3 + 1 for t in v]
    assert tuple(mann_whitney_u(xs, ys)) == tuple(mann_whitney_u(f(xs), f(ys)))


def test_mwu_normal_branch():
    rng = np.random.default_rng(0)
    x, y = rng.normal(0, 1, 40), rng.normal(0.8, 1, 40)
    r = mann_whitney_u(x, y)
    assert not r.exact and r.p_value < 0.01
    assert r.statistic == brute_u(x, y)


def test_mwu_exact_and_normal_agree_roughly():
    rng = np.random.default_rng(1)
    x, y = rng.normal(0, 1, 12), rng.normal(0.5, 1, 12)
    e, a = mann_whitney_u(x, y, exact=True), mann_whitney_u(x, y, exact=False)
    assert abs(e.p_value - a.p_value) < 0.02


def test_mwu_calibrated_under_null():
    rng = np.random.default_rng(2)
    rejections = sum(mann_whitney_u(rng.normal(size=15), rng.normal(size=15)).significant for _ in range(600))
    assert rejections / 600 <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / 600)


def test_wilcoxon_textbook_cases():
    r = wilcoxon_signed_rank([1, 2, 3], [0, 0, 0])
    assert r.statistic == 0 and r.p_value == pytest.approx(0.25)
    r = wilcoxon_signed_rank([1, 0], [0, 1])
    assert r.statistic == 1.5 and r.p_value == 1.0


def test_wilcoxon_zero_differences():
    assert tuple(wilcoxon_signed_rank([1, 2], [1, 2])) == (0.0, 1.0)
    assert wilcoxon_signed_rank([1, 2, 5], [1, 2, 4]).p_value == 1.0


def test_wilcoxon_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        wilcoxon_signed_rank([1, 2], [1])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-4, 4).map(float), min_size=1, max_size=9))
def test_wilcoxon_matches_enumeration(d):
    r = wilcoxon_signed_rank(d, [0.0] * len(d))
    assert r.p_value == pytest.approx(brute_wilcoxon_p(d), abs=1e-12)
    nz = [v for v in d if v != 0]
    if nz:
        ranks = naive_midranks([abs(v) for v in nz])
        wp = sum(rk for rk, v in zip(ranks, nz) if v > 0)
        assert r.statistic == min(wp, sum(ranks) - wp)


def test_wilcoxon_swap_symmetry():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=10), rng.normal(size=10)
    assert tuple(wilcoxon_signed_rank(x, y)) == tuple(wilcoxon_signed_rank(y, x))


def test_wilcoxon_normal_branch():
    rng = np.random.default_rng(4)
    x = rng.normal(size=30)
    r = wilcoxon_signed_rank(x + 1.0, x + rng.normal(0, 0.3, 30))
    assert not r.exact and r.p_value < 1e-3
