"""Subset-weighted likelihood sums via a two-term recursion.

Given per-node weights b(i) (node i behaves as Byzantine) and h(i) (node i
behaves honestly), several fusion rules need

    f(n, k) = sum over all size-k subsets S of {1..n} of
              prod_{i in S} b(i) * prod_{i not in S} h(i).

Summing the (n choose k) subsets directly is exponential. Splitting on
whether the first node of the remaining suffix is in S gives

    f(r, j) = b * f(r-1, j-1) + h * f(r-1, j)

with closed-form boundary values f(r, 0) and f(r, r) (pure products), so
only the interior cells reachable from (n, k) are ever evaluated. That is
at most k * (n - k + 1) two-term combinations.

Everything runs in the log domain; a weight of zero enters as -inf and
propagates correctly through the accumulation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "NodeWeights",
    "subset_sum",
    "subset_sum_with_stats",
    "subset_sum_all",
    "naive_subset_sum",
]

_NAIVE_LIMIT = 1_000_000


@dataclass(frozen=True)
class NodeWeights:
    """Per-node log weights for the two behaviours.

    logb[i] and logh[i] are log-likelihood contributions of node i when
    treated as Byzantine or honest. -inf entries (zero weight) are allowed,
    +inf and nan are not.
    """

    logb: np.ndarray
    logh: np.ndarray

    def __post_init__(self):
        logb = np.asarray(self.logb, dtype=np.float64)
        logh = np.asarray(self.logh, dtype=np.float64)
        if logb.ndim != 1 or logh.ndim != 1 or logb.shape != logh.shape:
            raise ValueError("logb and logh must be 1-d arrays of equal length")
        for name, arr in (("logb", logb), ("logh", logh)):
            if np.isnan(arr).any() or np.isposinf(arr).any():
                raise ValueError(f"{name} entries must be finite or -inf")
        object.__setattr__(self, "logb", logb)
        object.__setattr__(self, "logh", logh)

    @classmethod
    def from_linear(cls, b, h):
        """Build from linear-domain weights; zeros are fine."""
        b = np.asarray(b, dtype=np.float64)
        h = np.asarray(h, dtype=np.float64)
        if (b < 0).any() or (h < 0).any():
            raise ValueError("weights must be nonnegative")
        with np.errstate(divide="ignore"):
            return cls(np.log(b), np.log(h))

    @property
    def n(self):
        return self.logb.shape[0]


def _logaddexp(a, b):
    # scalar log(exp(a) + exp(b)) without the numpy call overhead
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi = a if a >= b else b
    return hi + math.log1p(math.exp(-abs(a - b)))


def _suffix_sums(arr):
    # out[r] = sum of the last r entries; -inf propagates as intended
    out = np.empty(arr.shape[0] + 1)
    out[0] = 0.0
    np.cumsum(arr[::-1], out=out[1:])
    return out


def subset_sum(weights, k):
    """log f(n, k) for the given node weights."""
    return subset_sum_with_stats(weights, k)[0]


def subset_sum_with_stats(weights, k):
    """log f(n, k) plus the number of interior two-term evaluations used."""
    n = weights.n
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in [0, {n}], got {k}")
    h_suf = _suffix_sums(weights.logh)
    b_suf = _suffix_sums(weights.logb)
    # table[r][j] only for interior cells; boundaries come from the prefix sums
    table = {}

    def get(r, j):
        if j == 0:
            return h_suf[r]
        if j == r:
            return b_suf[r]
        return table[(r, j)]

    count = 0
    for r in range(2, n + 1):
        lo = max(1, k - (n - r))
        hi = min(r - 1, k)
        if lo > hi:
            continue
        node = n - r  # node joined when the suffix grows to length r
        lb = weights.logb[node]
        lh = weights.logh[node]
        for j in range(lo, hi + 1):
            table[(r, j)] = _logaddexp(lb + get(r - 1, j - 1), lh + get(r - 1, j))
            count += 1
    return get(n, k), count


def subset_sum_all(weights, k_max):
    """log f(n, k) for every k in 0..k_max, sharing one table.

    Cheaper than k_max independent subset_sum calls when the caller needs a
    whole prefix of counts (the bounded-minority fusion rule does).
    """
    n = weights.n
    if not 0 <= k_max <= n:
        raise ValueError(f"k_max must lie in [0, {n}], got {k_max}")
    h_suf = _suffix_sums(weights.logh)
    b_suf = _suffix_sums(weights.logb)
    table = {}

    def get(r, j):
        if j == 0:
            return h_suf[r]
        if j == r:
            return b_suf[r]
        return table[(r, j)]

    for r in range(2, n + 1):
        node = n - r
        lb = weights.logb[node]
        lh = weights.logh[node]
        for j in range(1, min(r - 1, k_max) + 1):
            table[(r, j)] = _logaddexp(lb + get(r - 1, j - 1), lh + get(r - 1, j))
    return np.array([get(n, j) for j in range(k_max + 1)])


def naive_subset_sum(weights, k):
    """Literal enumeration of all (n choose k) subsets, log domain.

    Reference implementation for cross-checking; refuses to enumerate more
    than one million subsets.
    """
    n = weights.n
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in [0, {n}], got {k}")
    if math.comb(n, k) > _NAIVE_LIMIT:
        raise ValueError(f"(n choose k) = {math.comb(n, k)} exceeds {_NAIVE_LIMIT}")
    logb = weights.logb
    logh = weights.logh
    terms = np.empty(math.comb(n, k))
    for t, subset in enumerate(itertools.combinations(range(n), k)):
        chosen = set(subset)
        acc = 0.0
        for i in range(n):
            acc += logb[i] if i in chosen else logh[i]
        terms[t] = acc
    return float(logsumexp(terms))
