"""Rank-based two-sample tests with exact small-sample p-values.

Ranks are handled as doubled midranks so that every rank sum is an integer
and the exact null distributions can be tabulated by dynamic programming
without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EXACT_MWU_MIN = 8     # exact Mann-Whitney p when min(n, m) <= this ...
EXACT_MWU_MAX = 12    # ... and max(n, m) <= this
EXACT_WILCOXON = 12   # exact signed-rank p when n (non-zero diffs) <= this


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    exact: bool

    __test__ = False  # not a pytest class despite the name

    def __iter__(self):
        # allows ``u, p = mann_whitney_u(...)``
        return iter((self.statistic, self.p_value))

    @property
    def significant(self) -> bool:
        return self.p_value < 0.05


def doubled_midranks(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Twice the midrank of each value (1-based) and the tie-group sizes."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks2 = np.empty(len(v), dtype=np.int64)
    ties = []
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        # positions i..j (0-based) share rank ((i+1) + (j+1)) / 2
        ranks2[order[i:j + 1]] = i + j + 2
        ties.append(j - i + 1)
        i = j + 1
    return ranks2, np.array(ties, dtype=np.int64)


def _subset_sum_counts(ranks2: np.ndarray, k: int) -> dict[int, int]:
    """Number of k-subsets of ``ranks2`` per subset sum."""
    table: list[dict[int, int]] = [dict() for _ in range(k + 1)]
    table[0][0] = 1
    for r in ranks2.tolist():
        for size in range(min(k, len(ranks2)) - 1, -1, -1):
            src = table[size]
            if not src:
                continue
            dst = table[size + 1]
            for s, c in src.items():
                dst[s + r] = dst.get(s + r, 0) + c
    return table[k]


def _sign_sum_counts(ranks2: np.ndarray) -> dict[int, int]:
    """Number of sign assignments per sum of positively signed ranks."""
    counts = {0: 1}
    for r in ranks2.tolist():
        nxt = dict(counts)
        for s, c in counts.items():
            nxt[s + r] = nxt.get(s + r, 0) + c
        counts = nxt
    return counts


def _normal_two_sided(dev: float, sd: float) -> float:
    """Two-sided normal tail with continuity correction 0.5 on |deviation|."""
    z = max(abs(dev) - 0.5, 0.0) / sd
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def mann_whitney_u(xs: Sequence[float], ys: Sequence[float], exact: bool | None = None) -> TestResult:
    """Mann-Whitney U of ``xs`` against ``ys`` with a two-sided p-value.

    U counts pairs (x, y) with x > y, ties counting one half. The p-value is
    P(|U - nm/2| >= |U_obs - nm/2|) under random relabelling; it is computed
    exactly when min(n, m) <= 8 and max(n, m) <= 12 (or ``exact=True``),
    otherwise by the tie-corrected normal approximation with continuity
    correction. A pooled sample of identical values gives p = 1.
    """
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    n, m = len(x), len(y)
    if n < 1 or m < 1:
        raise ValueError("both samples need at least one observation")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("samples must be finite")
    ranks2, ties = doubled_midranks(np.concatenate([x, y]))
    r2 = int(ranks2[:n].sum())
    u2 = r2 - n * (n + 1)       # 2U
    u = u2 / 2
    if len(ties) == 1:
        return TestResult(u, 1.0, True)
    if exact is None:
        exact = min(n, m) <= EXACT_MWU_MIN and max(n, m) <= EXACT_MWU_MAX
    nm = n * m
    if exact:
        dev = abs(u2 - nm)
        counts = _subset_sum_counts(ranks2, n)
        hit = sum(c for s, c in counts.items() if abs(s - n * (n + 1) - nm) >= dev)
        return TestResult(u, min(1.0, hit / math.comb(n + m, n)), True)
    big_n = n + m
    tie_term = float(np.sum(ties ** 3 - ties)) / (big_n * (big_n - 1))
    var = nm / 12.0 * ((big_n + 1) - tie_term)
    return TestResult(u, _normal_two_sided(u - nm / 2, math.sqrt(var)), False)


def wilcoxon_signed_rank(xs: Sequence[float], ys: Sequence[float], exact: bool | None = None) -> TestResult:
    """Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; the statistic is W = min(W+, W-) over
    midranks of |x - y|. The two-sided p-value P(|W+ - T/2| >= |W+_obs - T/2|)
    is exact for up to 12 non-zero differences (or ``exact=True``), else
    normal with tie and continuity corrections. All-zero differences give
    p = 1.
    """
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if len(x) != len(y):
        raise ValueError(f"paired samples differ in length ({len(x)} vs {len(y)})")
    if len(x) < 1:
        raise ValueError("need at least one pair")
    d = x - y
    if not np.all(np.isfinite(d)):
        raise ValueError("samples must be finite")
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return TestResult(0.0, 1.0, True)
    ranks2, ties = doubled_midranks(np.abs(d))
    total2 = int(ranks2.sum())
    wp2 = int(ranks2[d > 0].sum())
    w = min(wp2, total2 - wp2) / 2
    if exact is None:
        exact = n <= EXACT_WILCOXON
    if exact:
        dev = abs(2 * wp2 - total2)
        counts = _sign_sum_counts(ranks2)
        hit = sum(c for s, c in counts.items() if abs(2 * s - total2) >= dev)
        return TestResult(w, min(1.0, hit / 2 ** n), True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties ** 3 - ties)) / 48.0
    if var <= 0:
        return TestResult(w, 1.0, False)
    return TestResult(w, _normal_two_sided(wp2 / 2 - total2 / 4, math.sqrt(var)), False)
